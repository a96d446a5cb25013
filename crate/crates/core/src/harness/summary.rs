//! Mean ± sample standard deviation of final scores, per method and setting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::RunSummary;
use crate::curiosity::CuriosityKind;
use crate::env::{RewardMode, Scenario};
use crate::error::{Error, Result};
use crate::fmt17;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: CuriosityKind,
    /// `<scenario> <n>a <reward_mode>`, e.g. `same_landmark 2a sparse`.
    pub setting: String,
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub std: f64,
}

fn setting_key(s: &RunSummary) -> (u8, usize, u8) {
    let c = &s.config;
    (
        (c.scenario == Scenario::DifferentLandmark) as u8,
        c.n_agents,
        (c.reward_mode == RewardMode::Dense) as u8,
    )
}

fn setting_label(s: &RunSummary) -> String {
    let c = &s.config;
    format!("{} {}a {}", c.scenario, c.n_agents, c.reward_mode)
}

fn method_rank(k: CuriosityKind) -> usize {
    CuriosityKind::ALL
        .iter()
        .position(|&m| m == k)
        .expect("every kind is listed")
}

/// Groups by (setting, method), ordered by setting and then by method roster.
pub fn aggregate(results: &[RunSummary]) -> Vec<SummaryRow> {
    let mut sorted: Vec<&RunSummary> = results.iter().collect();
    sorted.sort_by_key(|s| (setting_key(s), method_rank(s.config.method)));
    let mut rows = Vec::new();
    for group in sorted.chunk_by(|a, b| setting_key(a) == setting_key(b) && a.config.method == b.config.method) {
        let scores: Vec<f64> = group.iter().map(|s| s.final_score).collect();
        let n = scores.len();
        let mean = scores.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        rows.push(SummaryRow {
            method: group[0].config.method,
            setting: setting_label(group[0]),
            runs: n,
            mean,
            std,
        });
    }
    rows
}

/// Methods as rows and settings as columns, each cell `mean ± std`.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let mut settings: Vec<&str> = Vec::new();
    for r in rows {
        if !settings.contains(&r.setting.as_str()) {
            settings.push(&r.setting);
        }
    }
    let mut methods: Vec<CuriosityKind> = rows.iter().map(|r| r.method).collect();
    methods.sort_by_key(|&m| method_rank(m));
    methods.dedup();

    let mut grid = vec![std::iter::once("method".to_string())
        .chain(settings.iter().map(|s| s.to_string()))
        .collect::<Vec<_>>()];
    for &m in &methods {
        let mut line = vec![m.label().to_string()];
        for s in &settings {
            line.push(
                rows.iter()
                    .find(|r| r.method == m && r.setting == *s)
                    .map(|r| format!("{:.2} ± {:.2} (n={})", r.mean, r.std, r.runs))
                    .unwrap_or_else(|| "-".into()),
            );
        }
        grid.push(line);
    }
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in &grid {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("method,setting,runs,mean,std\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.method,
            r.setting,
            r.runs,
            fmt17(r.mean),
            fmt17(r.std)
        );
    }
    out
}

/// Reads every `.meta` sidecar in `dir`, in file-name order.
pub fn read_results_dir(dir: &Path) -> Result<Vec<RunSummary>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "meta"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            RunSummary::parse(&text).map_err(|e| Error::Argument(format!("{}: {e}", p.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::RunConfig;

    fn summary(method: CuriosityKind, seed: u64, score: f64) -> RunSummary {
        RunSummary {
            config: RunConfig {
                method,
                seed,
                ..RunConfig::default()
            },
            final_score: score,
        }
    }

    #[test]
    fn two_scores_hand_arithmetic() {
        let rows = aggregate(&[summary(CuriosityKind::Mcm, 0, 0.8), summary(CuriosityKind::Mcm, 1, 0.9)]);
        assert_eq!(rows.len(), 1);
        assert!((rows[0].mean - 0.85).abs() < 1e-12);
        assert!((rows[0].std - 0.005f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn singleton_mean_is_exact() {
        let x = 0.123456789012345;
        let rows = aggregate(&[summary(CuriosityKind::IcmMin, 0, x)]);
        assert_eq!((rows[0].mean, rows[0].std), (x, 0.0));
        assert!(format_table(&rows).contains("0.12 ± 0.00"));
    }

    #[test]
    fn rows_follow_the_method_roster() {
        let rows = aggregate(&[
            summary(CuriosityKind::Mcm, 0, 0.1),
            summary(CuriosityKind::None, 0, 0.2),
            summary(CuriosityKind::IcmJoint, 0, 0.3),
        ]);
        let order: Vec<_> = rows.iter().map(|r| r.method).collect();
        assert_eq!(
            order,
            vec![CuriosityKind::None, CuriosityKind::IcmJoint, CuriosityKind::Mcm]
        );
        let table = format_table(&rows);
        let coma = table.find("COMA\u{20}").unwrap();
        let mcm = table.find("COMA+MCM").unwrap();
        assert!(coma < mcm, "{table}");
        assert!(summary_csv(&rows).starts_with("method,setting,runs,mean,std\nnone,"));
    }
}
