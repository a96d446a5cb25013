//! Learning-curve CSV files, one row per evaluation window.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::fmt17;

pub const HEADER: [&str; 10] = [
    "run_id",
    "method",
    "scenario",
    "n_agents",
    "seed",
    "episode",
    "normalized_reward",
    "extrinsic_return",
    "mean_intrinsic",
    "curiosity_loss",
];

/// Window means over `eval_interval` consecutive episodes.
///
/// `episode` is the number of episodes completed at the end of the window.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub method: String,
    pub scenario: String,
    pub n_agents: usize,
    pub seed: u64,
    pub episode: usize,
    pub normalized_reward: f64,
    pub extrinsic_return: f64,
    pub mean_intrinsic: f64,
    pub curiosity_loss: f64,
}

impl MetricsRow {
    fn record(&self) -> [String; 10] {
        [
            self.run_id.clone(),
            self.method.clone(),
            self.scenario.clone(),
            self.n_agents.to_string(),
            self.seed.to_string(),
            self.episode.to_string(),
            fmt17(self.normalized_reward),
            fmt17(self.extrinsic_return),
            fmt17(self.mean_intrinsic),
            fmt17(self.curiosity_loss),
        ]
    }

    fn from_record(rec: &csv::StringRecord) -> Result<Self> {
        if rec.len() != HEADER.len() {
            return Err(Error::Argument(format!(
                "csv row has {} fields, expected {}",
                rec.len(),
                HEADER.len()
            )));
        }
        fn num<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            rec[i]
                .parse()
                .map_err(|e| Error::Argument(format!("csv column `{}`: cannot parse `{}`: {e}", HEADER[i], &rec[i])))
        }
        Ok(Self {
            run_id: rec[0].to_string(),
            method: rec[1].to_string(),
            scenario: rec[2].to_string(),
            n_agents: num(rec, 3)?,
            seed: num(rec, 4)?,
            episode: num(rec, 5)?,
            normalized_reward: num(rec, 6)?,
            extrinsic_return: num(rec, 7)?,
            mean_intrinsic: num(rec, 8)?,
            curiosity_loss: num(rec, 9)?,
        })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Argument(format!("csv: {e}"))
}

pub fn write_rows(out: impl Write, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.record()).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Argument(format!("csv: {e}")))
}

/// Reads a file written by [`write_rows`], checking the header.
pub fn read_rows(input: impl Read) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?;
    if header.iter().ne(HEADER) {
        return Err(Error::Argument(format!("unexpected csv header {header:?}")));
    }
    r.records()
        .map(|rec| MetricsRow::from_record(&rec.map_err(csv_err)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(x: f64) -> MetricsRow {
        MetricsRow {
            run_id: "mcm_same_landmark_2a_sparse_s3".into(),
            method: "mcm".into(),
            scenario: "same_landmark".into(),
            n_agents: 2,
            seed: 3,
            episode: 100,
            normalized_reward: x,
            extrinsic_return: -x * 1e7,
            mean_intrinsic: x / 3.0,
            curiosity_loss: f64::MIN_POSITIVE,
        }
    }

    #[test]
    fn rows_round_trip_exactly() {
        let rows = vec![row(0.1), row(1.0 / 3.0), row(0.0)];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&HEADER.join(",")));
        assert_eq!(read_rows(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(read_rows("a,b\n1,2\n".as_bytes()).is_err());
    }
}
