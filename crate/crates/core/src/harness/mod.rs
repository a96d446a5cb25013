//! Experiment orchestration: run configs, single runs, sweeps and summaries.

pub mod config;
pub mod csv;
pub mod summary;
pub mod sweep;

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

pub use config::RunConfig;
pub use csv::{MetricsRow, HEADER};
pub use summary::{aggregate, format_table, read_results_dir, summary_csv, SummaryRow};
pub use sweep::{run_sweep, SweepSpec};

use crate::coma::policy::actor_suite;
use crate::coma::{EpisodeMetrics, Trainer};
use crate::error::{Error, Result};
use crate::fmt17;
use crate::nn::gradcheck::{mutation_control, network_suite, SuiteReport};

/// Environment variable naming the default results directory.
pub const RESULTS_DIR_VAR: &str = "MCM_RESULTS_DIR";

/// `$MCM_RESULTS_DIR`, or `results` when unset.
pub fn default_results_dir() -> PathBuf {
    std::env::var_os(RESULTS_DIR_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

/// A finished run: its resolved config, every episode and the curve rows.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: RunConfig,
    pub episodes: Vec<EpisodeMetrics>,
    pub final_score: f64,
    pub rows: Vec<MetricsRow>,
}

/// The part of a run kept in its metadata sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub config: RunConfig,
    pub final_score: f64,
}

/// Mean normalized reward over the last tenth of the episodes (at least one).
pub fn final_score(episodes: &[EpisodeMetrics]) -> f64 {
    if episodes.is_empty() {
        return 0.0;
    }
    let k = episodes.len().div_ceil(10);
    let tail = &episodes[episodes.len() - k..];
    tail.iter().map(|e| e.normalized_reward).sum::<f64>() / k as f64
}

/// Averages consecutive windows of `interval` episodes; a short last window is kept.
pub fn window_rows(cfg: &RunConfig, episodes: &[EpisodeMetrics]) -> Vec<MetricsRow> {
    let run_id = cfg.run_id();
    let mut done = 0;
    episodes
        .chunks(cfg.eval_interval.max(1))
        .map(|w| {
            done += w.len();
            let k = w.len() as f64;
            let mean = |f: &dyn Fn(&EpisodeMetrics) -> f64| w.iter().map(f).sum::<f64>() / k;
            MetricsRow {
                run_id: run_id.clone(),
                method: cfg.method.to_string(),
                scenario: cfg.scenario.to_string(),
                n_agents: cfg.n_agents,
                seed: cfg.seed,
                episode: done,
                normalized_reward: mean(&|e| e.normalized_reward),
                extrinsic_return: mean(&|e| e.extrinsic_return),
                mean_intrinsic: mean(&|e| e.mean_intrinsic),
                curiosity_loss: mean(&|e| {
                    if e.curiosity_loss.is_empty() {
                        0.0
                    } else {
                        e.curiosity_loss.iter().sum::<f64>() / e.curiosity_loss.len() as f64
                    }
                }),
            }
        })
        .collect()
}

/// Trains one configuration to its episode budget.
///
/// `progress` is called after every round with the episodes completed so far.
/// Any failure inside training aborts with the index of the first episode of
/// the failing round.
pub fn run(cfg: &RunConfig, mut progress: impl FnMut(usize, &[EpisodeMetrics])) -> Result<RunResult> {
    cfg.validate()?;
    let cfg = cfg.resolved();
    let total = cfg.total_episodes();
    let mut trainer = Trainer::new(cfg.world(), cfg.train(), &cfg.arch(), cfg.method, cfg.seed)?;
    let per_round = cfg.episodes_per_update;
    let mut episodes = Vec::with_capacity(total);
    while episodes.len() < total {
        let start = episodes.len();
        let count = per_round.min(total - start);
        let report = (|| {
            let eps = trainer.config().epsilon_at(trainer.episodes_done());
            let mut batch = (0..count).map(|_| trainer.rollout(eps)).collect::<Result<Vec<_>>>()?;
            trainer.train_on(&mut batch, eps)
        })()
        .map_err(|e| Error::RunAborted {
            episode: start,
            source: Box::new(e),
        })?;
        episodes.extend(report.episodes);
        progress(episodes.len(), &episodes[start..]);
    }
    let rows = window_rows(&cfg, &episodes);
    Ok(RunResult {
        final_score: final_score(&episodes),
        config: cfg,
        episodes,
        rows,
    })
}

impl RunResult {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            config: self.config.clone(),
            final_score: self.final_score,
        }
    }

    pub fn csv_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.csv", self.config.run_id()))
    }

    pub fn meta_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.meta", self.config.run_id()))
    }

    /// Writes `<run_id>.csv` and `<run_id>.meta` into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = self.csv_path(dir);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        csv::write_rows(BufWriter::new(file), &self.rows)?;
        let path = self.meta_path(dir);
        fs::write(&path, self.summary().to_text()).map_err(|e| Error::io(&path, e))
    }
}

impl RunSummary {
    /// The resolved config followed by the result keys.
    pub fn to_text(&self) -> String {
        let mut out = self.config.to_text();
        let _ = writeln!(out, "final_score = {}", fmt17(self.final_score));
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        let mut final_score = None;
        for (no, line) in text.lines().enumerate() {
            match config::split_line(line) {
                None => {}
                Some(Ok(("final_score", v))) => {
                    final_score = Some(
                        v.parse::<f64>()
                            .map_err(|e| Error::config("final_score", format!("cannot parse `{v}`: {e}")))?,
                    )
                }
                Some(Ok((k, v))) => config.set(k, v)?,
                Some(Err(l)) => return Err(Error::config(l.clone(), format!("line {}: malformed", no + 1))),
            }
        }
        config.validate()?;
        let final_score = final_score.ok_or_else(|| Error::config("final_score", "missing"))?;
        Ok(Self { config, final_score })
    }
}

/// Runs `cfg` and writes its files into `dir`.
pub fn run_experiment(
    cfg: &RunConfig,
    dir: &Path,
    progress: impl FnMut(usize, &[EpisodeMetrics]),
) -> Result<RunResult> {
    let result = run(cfg, progress)?;
    result.write(dir)?;
    Ok(result)
}

/// Outcome of the gradient-check suites plus the mutation control.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOutcome {
    pub suites: Vec<SuiteReport>,
    /// Max relative error after corrupting one analytic gradient entry.
    pub mutation_error: f64,
}

impl GradcheckOutcome {
    pub const MUTATION_THRESHOLD: f64 = 1e-2;

    pub fn mutation_detected(&self) -> bool {
        self.mutation_error > Self::MUTATION_THRESHOLD
    }

    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteReport::passed) && self.mutation_detected()
    }
}

/// Network suite on `cases` networks, actor suite on `cases / 4`, and the mutation control.
pub fn gradcheck(cases: usize, seed: u64) -> Result<GradcheckOutcome> {
    Ok(GradcheckOutcome {
        suites: vec![network_suite(cases, seed)?, actor_suite(cases.div_ceil(4), seed)?],
        mutation_error: mutation_control(seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(values: &[f64]) -> Vec<EpisodeMetrics> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| EpisodeMetrics {
                episode: i,
                extrinsic_return: v * 50.0,
                normalized_reward: v,
                success_any: v > 0.0,
                mean_intrinsic: 0.0,
                curiosity_loss: vec![1.0, 3.0],
            })
            .collect()
    }

    #[test]
    fn final_score_uses_the_last_tenth() {
        let mut v = vec![0.0; 90];
        v.extend(vec![0.5; 10]);
        assert_eq!(final_score(&metrics(&v)), 0.5);
        assert_eq!(final_score(&metrics(&[0.2, 0.4, 0.9])), 0.9);
    }

    #[test]
    fn windows_keep_the_short_tail() {
        let cfg = RunConfig {
            eval_interval: 4,
            ..RunConfig::default()
        };
        let rows = window_rows(&cfg, &metrics(&[0.0, 0.0, 1.0, 1.0, 0.3]));
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].episode, rows[0].normalized_reward), (4, 0.5));
        assert_eq!((rows[1].episode, rows[1].normalized_reward), (5, 0.3));
        assert_eq!(rows[0].curiosity_loss, 2.0);
    }

    #[test]
    fn summary_text_round_trip() {
        let s = RunSummary {
            config: RunConfig::default().resolved(),
            final_score: 1.0 / 7.0,
        };
        assert_eq!(RunSummary::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn tiny_run_is_deterministic_and_writes_files() {
        let mut cfg = RunConfig::default();
        for kv in [
            "total_episodes=20",
            "eval_interval=8",
            "hidden_dims=8,8",
            "episode_length=10",
        ] {
            cfg.apply_override(kv).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let mut calls = Vec::new();
        let a = run_experiment(&cfg, dir.path(), |done, _| calls.push(done)).unwrap();
        assert_eq!(calls, vec![8, 16, 20]);
        assert_eq!(a.rows.len(), 3);
        let first = fs::read(a.csv_path(dir.path())).unwrap();
        run_experiment(&cfg, dir.path(), |_, _| {}).unwrap();
        assert_eq!(fs::read(a.csv_path(dir.path())).unwrap(), first);
        let meta = RunSummary::parse(&fs::read_to_string(a.meta_path(dir.path())).unwrap()).unwrap();
        assert_eq!(meta.final_score, a.final_score);
        assert_eq!(meta.config.total_episodes, Some(20));
    }
}
