//! Methods × seeds grids run in parallel.
//!
//! A sweep file is a run config plus three extra keys:
//!
//! ```text
//! scenario = same_landmark
//! methods = none, mcm          # or `all`
//! seeds = 0..5                 # half-open range, or a comma list
//! workers = 4                  # 0 uses every core
//! ```

use std::path::Path;

use rayon::prelude::*;

use super::config::{split_line, RunConfig};
use super::{run_experiment, RunResult};
use crate::curiosity::CuriosityKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: RunConfig,
    pub methods: Vec<CuriosityKind>,
    pub seeds: Vec<u64>,
    pub workers: usize,
}

fn parse_methods(value: &str) -> Result<Vec<CuriosityKind>> {
    if value.trim() == "all" {
        return Ok(CuriosityKind::ALL.to_vec());
    }
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::config("methods", format!("unknown method `{s}`")))
        })
        .collect()
}

fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let bad = |s: &str| Error::config("seeds", format!("cannot parse `{s}`"));
    if let Some((a, b)) = value.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad(value))?;
        let b: u64 = b.trim().parse().map_err(|_| bad(value))?;
        return Ok((a..b).collect());
    }
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad(s)))
        .collect()
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut base = RunConfig::default();
        let mut methods = None;
        let mut seeds = None;
        let mut workers = 1;
        for (no, line) in text.lines().enumerate() {
            match split_line(line) {
                None => {}
                Some(Ok(("methods", v))) => methods = Some(parse_methods(v)?),
                Some(Ok(("seeds", v))) => seeds = Some(parse_seeds(v)?),
                Some(Ok(("workers", v))) => {
                    workers = v
                        .parse()
                        .map_err(|_| Error::config("workers", format!("cannot parse `{v}`")))?
                }
                Some(Ok((k, v))) => base.set(k, v)?,
                Some(Err(l)) => return Err(Error::config(l.clone(), format!("line {}: malformed", no + 1))),
            }
        }
        let spec = Self {
            base,
            methods: methods.ok_or_else(|| Error::config("methods", "missing"))?,
            seeds: seeds.ok_or_else(|| Error::config("seeds", "missing"))?,
            workers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.methods.is_empty() {
            return Err(Error::config("methods", "must list at least one method"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must list at least one seed"));
        }
        Ok(())
    }

    /// Every cell's config, methods outermost.
    pub fn cells(&self) -> Vec<RunConfig> {
        self.methods
            .iter()
            .flat_map(|&method| {
                self.seeds.iter().map(move |&seed| RunConfig {
                    method,
                    seed,
                    ..self.base.clone()
                })
            })
            .collect()
    }
}

/// Runs every cell and writes its files into `dir`.
///
/// Results come back in [`SweepSpec::cells`] order. If any cell fails, the
/// first failing cell is reported; the other cells still run to completion.
pub fn run_sweep(spec: &SweepSpec, dir: &Path, on_done: &(dyn Fn(&RunResult) + Sync)) -> Result<Vec<RunResult>> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::Argument(format!("cannot start {} workers: {e}", spec.workers)))?;
    let cells = spec.cells();
    let outcomes: Vec<Result<RunResult>> = pool.install(|| {
        cells
            .par_iter()
            .with_max_len(1)
            .map(|cfg| {
                let r = run_experiment(cfg, dir, |_, _| {})?;
                on_done(&r);
                Ok(r)
            })
            .collect()
    });
    cells
        .iter()
        .zip(outcomes)
        .map(|(cfg, r)| {
            r.map_err(|e| Error::SweepCell {
                method: cfg.method.to_string(),
                seed: cfg.seed,
                source: Box::new(e),
            })
        })
        .collect()
}
