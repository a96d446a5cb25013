//! Curiosity-driven exploration with mixed individual and joint objectives
//! for cooperative multi-agent navigation.
//!
//! - [`env`]: the cooperative navigation world (sparse and dense rewards).
//! - [`nn`]: trunk-plus-heads MLPs, reverse-mode gradients, Adam, gradient checks.
//! - [`curiosity`]: forward-model curiosity banks for every intrinsic-reward variant.
//! - [`coma`]: counterfactual actor-critic trainer consuming mixed rewards.
//! - [`harness`]: run configuration, experiments, sweeps, CSV metrics and summaries.

pub mod coma;
pub mod curiosity;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod rng;

pub use coma::{CentralCritic, EpisodeMetrics, PolicySet, RoundReport, TrainConfig, Trainer};
pub use curiosity::{mix_rewards, CuriosityBank, CuriosityKind, IntrinsicRewards, Transition};
pub use env::{Action, EnvState, NavEnv, Observation, RewardMode, Scenario, StepResult, WorldConfig};
pub use error::{Error, Result};
pub use harness::{RunConfig, RunResult, RunSummary};
pub use nn::{AdamConfig, Arch, Gradients, Network, NetworkSpec, OptimizerState};
pub use rng::SeedStreams;

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
