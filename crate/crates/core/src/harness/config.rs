//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key is optional; missing
//! keys keep their defaults. Later assignments override earlier ones, which is
//! how command-line overrides are layered over a file.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::coma::TrainConfig;
use crate::curiosity::CuriosityKind;
use crate::env::{RewardMode, Scenario, WorldConfig};
use crate::error::{Error, Result};
use crate::nn::Arch;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub n_agents: usize,
    pub reward_mode: RewardMode,
    pub method: CuriosityKind,
    pub seed: u64,
    /// `None` picks the team-size default, see [`RunConfig::total_episodes`].
    pub total_episodes: Option<usize>,
    pub eval_interval: usize,
    pub lambda: f64,
    pub clip_max: f64,

    pub half_extent: f64,
    pub step_size: f64,
    pub episode_length: usize,
    pub success_radius: f64,
    pub collision_radius: f64,
    pub collision_penalty: f64,
    pub start_jitter: f64,

    pub gamma: f64,
    pub td_lambda: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub curiosity_lr: f64,
    pub episodes_per_update: usize,
    pub critic_steps: usize,
    pub entropy_coeff: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_anneal_fraction: f64,

    pub hidden_dims: Vec<usize>,
    pub leaky_slope: f64,
}

/// Every recognised key, in serialization order.
pub const KEYS: &[&str] = &[
    "scenario",
    "n_agents",
    "reward_mode",
    "method",
    "seed",
    "total_episodes",
    "eval_interval",
    "lambda",
    "clip_max",
    "half_extent",
    "step_size",
    "episode_length",
    "success_radius",
    "collision_radius",
    "collision_penalty",
    "start_jitter",
    "gamma",
    "td_lambda",
    "actor_lr",
    "critic_lr",
    "curiosity_lr",
    "episodes_per_update",
    "critic_steps",
    "entropy_coeff",
    "epsilon_start",
    "epsilon_end",
    "epsilon_anneal_fraction",
    "hidden_dims",
    "leaky_slope",
];

impl Default for RunConfig {
    fn default() -> Self {
        let world = WorldConfig::new(Scenario::SameLandmark, 2, RewardMode::Sparse);
        let train = TrainConfig::default();
        let arch = Arch::default();
        Self {
            scenario: world.scenario,
            n_agents: world.n_agents,
            reward_mode: world.reward_mode,
            method: CuriosityKind::Mcm,
            seed: 0,
            total_episodes: None,
            eval_interval: 100,
            lambda: train.intrinsic_lambda,
            clip_max: train.intrinsic_clip,
            half_extent: world.half_extent,
            step_size: world.step_size,
            episode_length: world.episode_length,
            success_radius: world.success_radius,
            collision_radius: world.collision_radius,
            collision_penalty: world.collision_penalty,
            start_jitter: world.start_jitter,
            gamma: train.gamma,
            td_lambda: train.td_lambda,
            actor_lr: train.actor_lr,
            critic_lr: train.critic_lr,
            curiosity_lr: train.curiosity_lr,
            episodes_per_update: train.episodes_per_update,
            critic_steps: train.critic_steps,
            entropy_coeff: train.entropy_coeff,
            epsilon_start: train.epsilon_start,
            epsilon_end: train.epsilon_end,
            epsilon_anneal_fraction: train.epsilon_anneal_fraction,
            hidden_dims: arch.hidden_dims,
            leaky_slope: arch.leaky_slope,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

/// Splits one config line into `(key, value)`, or `None` for blanks and comments.
pub fn split_line(line: &str) -> Option<std::result::Result<(&str, &str), String>> {
    let line = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
    .trim();
    if line.is_empty() {
        return None;
    }
    Some(match line.split_once('=') {
        Some((k, v)) => Ok((k.trim(), v.trim())),
        None => Err(line.to_string()),
    })
}

impl RunConfig {
    /// Parses a config file over the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies every assignment in `text` without validating.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            match split_line(line) {
                None => {}
                Some(Ok((k, v))) => self.set(k, v)?,
                Some(Err(l)) => {
                    return Err(Error::config(
                        l.clone(),
                        format!("line {}: expected `key = value`, found `{l}`", no + 1),
                    ))
                }
            }
        }
        Ok(())
    }

    /// Applies a `key=value` override as given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "override must look like `key=value`"))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "scenario" => self.scenario = parse_value(key, value)?,
            "n_agents" => self.n_agents = parse_value(key, value)?,
            "reward_mode" => self.reward_mode = parse_value(key, value)?,
            "method" => self.method = value.parse()?,
            "seed" => self.seed = parse_value(key, value)?,
            "total_episodes" => self.total_episodes = Some(parse_value(key, value)?),
            "eval_interval" => self.eval_interval = parse_value(key, value)?,
            "lambda" => self.lambda = parse_value(key, value)?,
            "clip_max" => self.clip_max = parse_value(key, value)?,
            "half_extent" => self.half_extent = parse_value(key, value)?,
            "step_size" => self.step_size = parse_value(key, value)?,
            "episode_length" => self.episode_length = parse_value(key, value)?,
            "success_radius" => self.success_radius = parse_value(key, value)?,
            "collision_radius" => self.collision_radius = parse_value(key, value)?,
            "collision_penalty" => self.collision_penalty = parse_value(key, value)?,
            "start_jitter" => self.start_jitter = parse_value(key, value)?,
            "gamma" => self.gamma = parse_value(key, value)?,
            "td_lambda" => self.td_lambda = parse_value(key, value)?,
            "actor_lr" => self.actor_lr = parse_value(key, value)?,
            "critic_lr" => self.critic_lr = parse_value(key, value)?,
            "curiosity_lr" => self.curiosity_lr = parse_value(key, value)?,
            "episodes_per_update" => self.episodes_per_update = parse_value(key, value)?,
            "critic_steps" => self.critic_steps = parse_value(key, value)?,
            "entropy_coeff" => self.entropy_coeff = parse_value(key, value)?,
            "epsilon_start" => self.epsilon_start = parse_value(key, value)?,
            "epsilon_end" => self.epsilon_end = parse_value(key, value)?,
            "epsilon_anneal_fraction" => self.epsilon_anneal_fraction = parse_value(key, value)?,
            "hidden_dims" => self.hidden_dims = parse_list(key, value)?,
            "leaky_slope" => self.leaky_slope = parse_value(key, value)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "scenario" => self.scenario.to_string(),
            "n_agents" => self.n_agents.to_string(),
            "reward_mode" => self.reward_mode.to_string(),
            "method" => self.method.to_string(),
            "seed" => self.seed.to_string(),
            "total_episodes" => self.total_episodes?.to_string(),
            "eval_interval" => self.eval_interval.to_string(),
            "lambda" => self.lambda.to_string(),
            "clip_max" => self.clip_max.to_string(),
            "half_extent" => self.half_extent.to_string(),
            "step_size" => self.step_size.to_string(),
            "episode_length" => self.episode_length.to_string(),
            "success_radius" => self.success_radius.to_string(),
            "collision_radius" => self.collision_radius.to_string(),
            "collision_penalty" => self.collision_penalty.to_string(),
            "start_jitter" => self.start_jitter.to_string(),
            "gamma" => self.gamma.to_string(),
            "td_lambda" => self.td_lambda.to_string(),
            "actor_lr" => self.actor_lr.to_string(),
            "critic_lr" => self.critic_lr.to_string(),
            "curiosity_lr" => self.curiosity_lr.to_string(),
            "episodes_per_update" => self.episodes_per_update.to_string(),
            "critic_steps" => self.critic_steps.to_string(),
            "entropy_coeff" => self.entropy_coeff.to_string(),
            "epsilon_start" => self.epsilon_start.to_string(),
            "epsilon_end" => self.epsilon_end.to_string(),
            "epsilon_anneal_fraction" => self.epsilon_anneal_fraction.to_string(),
            "hidden_dims" => self
                .hidden_dims
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", "),
            "leaky_slope" => self.leaky_slope.to_string(),
            _ => return None,
        })
    }

    /// Serializes every set key; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            if let Some(v) = self.get(key) {
                let _ = writeln!(out, "{key} = {v}");
            }
        }
        out
    }

    /// 30,000 episodes for two agents, 50,000 for four, unless set.
    pub fn total_episodes(&self) -> usize {
        self.total_episodes
            .unwrap_or(if self.n_agents == 4 { 50_000 } else { 30_000 })
    }

    /// The same config with the episode budget made explicit.
    pub fn resolved(&self) -> Self {
        Self {
            total_episodes: Some(self.total_episodes()),
            ..self.clone()
        }
    }

    pub fn world(&self) -> WorldConfig {
        WorldConfig {
            half_extent: self.half_extent,
            step_size: self.step_size,
            episode_length: self.episode_length,
            success_radius: self.success_radius,
            collision_radius: self.collision_radius,
            collision_penalty: self.collision_penalty,
            start_jitter: self.start_jitter,
            ..WorldConfig::new(self.scenario, self.n_agents, self.reward_mode)
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            gamma: self.gamma,
            td_lambda: self.td_lambda,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            curiosity_lr: self.curiosity_lr,
            episodes_per_update: self.episodes_per_update,
            critic_steps: self.critic_steps,
            entropy_coeff: self.entropy_coeff,
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            epsilon_anneal_fraction: self.epsilon_anneal_fraction,
            total_episodes: self.total_episodes(),
            intrinsic_lambda: self.lambda,
            intrinsic_clip: self.clip_max,
        }
    }

    pub fn arch(&self) -> Arch {
        Arch {
            hidden_dims: self.hidden_dims.clone(),
            leaky_slope: self.leaky_slope,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.world().validate()?;
        self.train().validate()?;
        if self.eval_interval == 0 {
            return Err(Error::config("eval_interval", "must be >= 1"));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::config("hidden_dims", "every width must be >= 1"));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::config("leaky_slope", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// File stem shared by a run's CSV and metadata files.
    pub fn run_id(&self) -> String {
        format!(
            "{}_{}_{}a_{}_s{}",
            self.method, self.scenario, self.n_agents, self.reward_mode, self.seed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.lambda, 0.05);
        assert_eq!(cfg.clip_max, 1.0);
        assert_eq!(cfg.total_episodes(), 30_000);
        assert_eq!(cfg.eval_interval, 100);
    }

    #[test]
    fn four_agents_get_the_longer_budget() {
        let cfg = RunConfig::parse("n_agents = 4").unwrap();
        assert_eq!(cfg.total_episodes(), 50_000);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = RunConfig::parse("# header\n\nmethod = icm_min  # trailing\nseed=7\n").unwrap();
        assert_eq!(cfg.method, CuriosityKind::IcmMin);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn overrides_win_over_file_values() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("method = mcm").unwrap();
        cfg.apply_override("method=icm_min").unwrap();
        assert_eq!(cfg.method, CuriosityKind::IcmMin);
    }

    #[test]
    fn errors_name_the_key() {
        let key_of = |text: &str| match RunConfig::parse(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        assert_eq!(key_of("n_agents = 3"), "n_agents");
        assert_eq!(key_of("colour = red"), "colour");
        assert_eq!(key_of("gamma = fast"), "gamma");
        assert_eq!(key_of("gamma = 1.0"), "gamma");
        assert_eq!(key_of("method = qmix"), "method");
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "scenario = different_landmark\nn_agents = 4\nactor_lr = 3e-4\nhidden_dims = 32, 16\ntotal_episodes = 123",
        )
        .unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(
            RunConfig::parse(&RunConfig::default().to_text()).unwrap(),
            RunConfig::default()
        );
    }
}
