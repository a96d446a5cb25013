//! Cooperative navigation world.
//!
//! `N` point agents move on the square `[-h, h]²` by fixed-size cardinal
//! displacements. Each agent observes the positions of all landmarks and of
//! the other agents relative to itself. In sparse mode the team earns 1 on
//! every step at which all agents are simultaneously within `success_radius`
//! of their assigned landmarks, and 0 otherwise. Dense mode pays the negated
//! sum of closest-agent distances per landmark minus a collision penalty.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fmt17;

pub const N_ACTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    SameLandmark,
    DifferentLandmark,
}

impl Scenario {
    pub fn n_landmarks(self) -> usize {
        match self {
            Scenario::SameLandmark => 1,
            Scenario::DifferentLandmark => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::SameLandmark => "same_landmark",
            Scenario::DifferentLandmark => "different_landmark",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "same_landmark" => Ok(Scenario::SameLandmark),
            "different_landmark" => Ok(Scenario::DifferentLandmark),
            other => Err(format!(
                "unknown scenario `{other}` (expected same_landmark or different_landmark)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewardMode {
    Sparse,
    Dense,
}

impl RewardMode {
    pub fn name(self) -> &'static str {
        match self {
            RewardMode::Sparse => "sparse",
            RewardMode::Dense => "dense",
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewardMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sparse" => Ok(RewardMode::Sparse),
            "dense" => Ok(RewardMode::Dense),
            other => Err(format!("unknown reward mode `{other}` (expected sparse or dense)")),
        }
    }
}

/// One of the five discrete moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    /// Unit displacement direction.
    pub fn direction(self) -> [f64; 2] {
        match self {
            Action::Up => [0.0, 1.0],
            Action::Down => [0.0, -1.0],
            Action::Left => [-1.0, 0.0],
            Action::Right => [1.0, 0.0],
            Action::Stay => [0.0, 0.0],
        }
    }

    pub fn one_hot(self) -> [f64; N_ACTIONS] {
        let mut v = [0.0; N_ACTIONS];
        v[self.index()] = 1.0;
        v
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
            Action::Stay => "stay",
        }
    }
}

impl FromStr for Action {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Action::ALL
            .iter()
            .copied()
            .find(|a| a.symbol() == s)
            .ok_or_else(|| format!("unknown action `{s}`"))
    }
}

/// Relative-position observation of a single agent.
pub type Observation = Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub scenario: Scenario,
    pub n_agents: usize,
    pub n_landmarks: usize,
    pub half_extent: f64,
    pub step_size: f64,
    pub episode_length: usize,
    pub success_radius: f64,
    pub collision_radius: f64,
    pub collision_penalty: f64,
    pub reward_mode: RewardMode,
    pub start_jitter: f64,
}

impl WorldConfig {
    /// Default geometry for a scenario and team size.
    pub fn new(scenario: Scenario, n_agents: usize, reward_mode: RewardMode) -> Self {
        Self {
            scenario,
            n_agents,
            n_landmarks: scenario.n_landmarks(),
            half_extent: 1.0,
            step_size: 0.1,
            episode_length: 50,
            success_radius: 0.1,
            collision_radius: 0.05,
            collision_penalty: 1.0,
            reward_mode,
            start_jitter: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents != 2 && self.n_agents != 4 {
            return Err(Error::config(
                "n_agents",
                format!("must be 2 or 4, got {}", self.n_agents),
            ));
        }
        if self.n_landmarks != self.scenario.n_landmarks() {
            return Err(Error::config(
                "n_landmarks",
                format!(
                    "scenario {} requires {} landmark(s), got {}",
                    self.scenario,
                    self.scenario.n_landmarks(),
                    self.n_landmarks
                ),
            ));
        }
        let h = self.half_extent;
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::config("half_extent", "must be finite and > 0"));
        }
        if !(self.step_size > 0.0 && self.step_size < h) {
            return Err(Error::config("step_size", "must lie in (0, half_extent)"));
        }
        if !(self.success_radius > 0.0 && self.success_radius < h) {
            return Err(Error::config("success_radius", "must lie in (0, half_extent)"));
        }
        if self.episode_length < 1 {
            return Err(Error::config("episode_length", "must be >= 1"));
        }
        if !(self.collision_radius >= 0.0 && self.collision_radius.is_finite()) {
            return Err(Error::config("collision_radius", "must be finite and >= 0"));
        }
        if !(self.collision_penalty >= 0.0 && self.collision_penalty.is_finite()) {
            return Err(Error::config("collision_penalty", "must be finite and >= 0"));
        }
        if !(self.start_jitter >= 0.0 && self.start_jitter.is_finite()) {
            return Err(Error::config("start_jitter", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Length of one agent's observation vector.
    pub fn obs_dim(&self) -> usize {
        2 * self.n_landmarks + 2 * (self.n_agents - 1)
    }

    /// Fixed landmark positions of the scenario.
    pub fn landmark_positions(&self) -> Vec<[f64; 2]> {
        let c = 0.8 * self.half_extent;
        match self.scenario {
            Scenario::SameLandmark => vec![[c, c]],
            Scenario::DifferentLandmark => vec![[-c, 0.0], [c, 0.0]],
        }
    }

    /// Jitter-free start positions.
    pub fn canonical_starts(&self) -> Vec<[f64; 2]> {
        let spacing = 0.15 * self.half_extent;
        let c = 0.8 * self.half_extent;
        (0..self.n_agents)
            .map(|k| match self.scenario {
                // 2x2 block growing away from the corner.
                Scenario::SameLandmark => [-c + spacing * (k % 2) as f64, -c + spacing * (k / 2) as f64],
                // Even agents head left, odd agents head right.
                Scenario::DifferentLandmark => {
                    let x = if k % 2 == 0 { -spacing / 2.0 } else { spacing / 2.0 };
                    let y = if self.n_agents == 2 {
                        0.0
                    } else if k / 2 == 0 {
                        spacing / 2.0
                    } else {
                        -spacing / 2.0
                    };
                    [x, y]
                }
            })
            .collect()
    }
}

/// Agent index to landmark index.
pub fn landmark_assignment(scenario: Scenario, n_agents: usize) -> Vec<usize> {
    match scenario {
        Scenario::SameLandmark => vec![0; n_agents],
        Scenario::DifferentLandmark => (0..n_agents).map(|n| n % 2).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub agent_positions: Vec<[f64; 2]>,
    pub landmark_positions: Vec<[f64; 2]>,
    pub landmark_assignment: Vec<usize>,
    pub timestep: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_joint_observation: Vec<Observation>,
    pub extrinsic_reward: f64,
    pub done: bool,
    pub success: bool,
}

fn clamp_position(p: [f64; 2], h: f64) -> [f64; 2] {
    [p[0].clamp(-h, h), p[1].clamp(-h, h)]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Start a new episode.
pub fn reset(config: &WorldConfig, rng: &mut impl rand::Rng) -> Result<(EnvState, Vec<Observation>)> {
    config.validate()?;
    let j = config.start_jitter;
    let agent_positions = config
        .canonical_starts()
        .into_iter()
        .map(|p| {
            let mut q = p;
            if j > 0.0 {
                q[0] += rng.gen_range(-j..=j);
                q[1] += rng.gen_range(-j..=j);
            }
            clamp_position(q, config.half_extent)
        })
        .collect();
    let state = EnvState {
        agent_positions,
        landmark_positions: config.landmark_positions(),
        landmark_assignment: landmark_assignment(config.scenario, config.n_agents),
        timestep: 0,
    };
    let obs = observe(&state);
    Ok((state, obs))
}

/// Relative observations: landmarks first, then the other agents in index order.
pub fn observe(state: &EnvState) -> Vec<Observation> {
    let agents = &state.agent_positions;
    agents
        .iter()
        .enumerate()
        .map(|(n, p)| {
            let mut o = Vec::with_capacity(2 * state.landmark_positions.len() + 2 * (agents.len() - 1));
            for l in &state.landmark_positions {
                o.push(l[0] - p[0]);
                o.push(l[1] - p[1]);
            }
            for (m, q) in agents.iter().enumerate() {
                if m != n {
                    o.push(q[0] - p[0]);
                    o.push(q[1] - p[1]);
                }
            }
            o
        })
        .collect()
}

/// Advance the world by one joint action.
pub fn step(config: &WorldConfig, state: &mut EnvState, joint_action: &[Action]) -> Result<StepResult> {
    if state.timestep >= config.episode_length {
        return Err(Error::EpisodeExhausted {
            timestep: state.timestep,
            episode_length: config.episode_length,
        });
    }
    if joint_action.len() != state.agent_positions.len() {
        return Err(Error::Shape(format!(
            "joint action has {} entries for {} agents",
            joint_action.len(),
            state.agent_positions.len()
        )));
    }
    for (p, a) in state.agent_positions.iter_mut().zip(joint_action) {
        let d = a.direction();
        let moved = [p[0] + config.step_size * d[0], p[1] + config.step_size * d[1]];
        *p = clamp_position(moved, config.half_extent);
    }
    state.timestep += 1;
    let (sparse, success) = sparse_reward(config, state);
    let extrinsic_reward = match config.reward_mode {
        RewardMode::Sparse => sparse,
        RewardMode::Dense => dense_reward(config, state),
    };
    Ok(StepResult {
        next_joint_observation: observe(state),
        extrinsic_reward,
        done: state.timestep == config.episode_length,
        success,
    })
}

/// Team success predicate and its {0, 1} reward.
pub fn sparse_reward(config: &WorldConfig, state: &EnvState) -> (f64, bool) {
    let success = state
        .agent_positions
        .iter()
        .zip(&state.landmark_assignment)
        .all(|(p, &l)| dist(*p, state.landmark_positions[l]) <= config.success_radius);
    (if success { 1.0 } else { 0.0 }, success)
}

/// Negated coverage distance minus the collision penalty.
pub fn dense_reward(config: &WorldConfig, state: &EnvState) -> f64 {
    let agents = &state.agent_positions;
    let coverage: f64 = state
        .landmark_positions
        .iter()
        .map(|l| agents.iter().map(|p| dist(*p, *l)).fold(f64::INFINITY, f64::min))
        .sum();
    let mut collisions = 0usize;
    for a in 0..agents.len() {
        for b in a + 1..agents.len() {
            if dist(agents[a], agents[b]) < 2.0 * config.collision_radius {
                collisions += 1;
            }
        }
    }
    -coverage - config.collision_penalty * collisions as f64
}

/// Owned environment: a config plus its current state.
#[derive(Debug, Clone)]
pub struct NavEnv {
    config: WorldConfig,
    state: EnvState,
}

impl NavEnv {
    pub fn new(config: WorldConfig, rng: &mut impl rand::Rng) -> Result<(Self, Vec<Observation>)> {
        let (state, obs) = reset(&config, rng)?;
        Ok((Self { config, state }, obs))
    }

    pub fn reset(&mut self, rng: &mut impl rand::Rng) -> Result<Vec<Observation>> {
        let (state, obs) = reset(&self.config, rng)?;
        self.state = state;
        Ok(obs)
    }

    pub fn step(&mut self, joint_action: &[Action]) -> Result<StepResult> {
        step(&self.config, &mut self.state, joint_action)
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn observe(&self) -> Vec<Observation> {
        observe(&self.state)
    }
}

/// Writes one comma-separated line per step for replay and debugging:
/// `timestep, x0, y0, ..., action0, ..., reward, success`.
pub struct TrajectoryWriter<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write_header(&mut self, n_agents: usize) -> std::io::Result<()> {
        let mut cols = vec!["timestep".to_string()];
        for n in 0..n_agents {
            cols.push(format!("x{n}"));
            cols.push(format!("y{n}"));
        }
        for n in 0..n_agents {
            cols.push(format!("action{n}"));
        }
        cols.push("reward".into());
        cols.push("success".into());
        writeln!(self.out, "{}", cols.join(","))
    }

    pub fn write_step(
        &mut self,
        state: &EnvState,
        joint_action: &[Action],
        result: &StepResult,
    ) -> std::io::Result<()> {
        writeln!(self.out, "{}", trajectory_line(state, joint_action, result))
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn trajectory_line(state: &EnvState, joint_action: &[Action], result: &StepResult) -> String {
    let mut fields = vec![state.timestep.to_string()];
    for p in &state.agent_positions {
        fields.push(fmt17(p[0]));
        fields.push(fmt17(p[1]));
    }
    fields.extend(joint_action.iter().map(|a| a.symbol().to_string()));
    fields.push(fmt17(result.extrinsic_reward));
    fields.push(if result.success { "1" } else { "0" }.to_string());
    fields.join(",")
}

/// A parsed trajectory line.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub timestep: usize,
    pub positions: Vec<[f64; 2]>,
    pub joint_action: Vec<Action>,
    pub reward: f64,
    pub success: bool,
}

pub fn parse_trajectory_line(line: &str, n_agents: usize) -> Result<TrajectoryRecord> {
    let fields: Vec<&str> = line.trim().split(',').collect();
    let expected = 1 + 2 * n_agents + n_agents + 2;
    if fields.len() != expected {
        return Err(Error::Argument(format!(
            "trajectory line has {} fields, expected {expected}",
            fields.len()
        )));
    }
    let bad = |what: &str, v: &str| Error::Argument(format!("bad {what} `{v}` in trajectory line"));
    let num = |v: &str| v.parse::<f64>().map_err(|_| bad("number", v));
    let timestep = fields[0].parse().map_err(|_| bad("timestep", fields[0]))?;
    let mut positions = Vec::with_capacity(n_agents);
    for n in 0..n_agents {
        positions.push([num(fields[1 + 2 * n])?, num(fields[2 + 2 * n])?]);
    }
    let base = 1 + 2 * n_agents;
    let joint_action = fields[base..base + n_agents]
        .iter()
        .map(|s| s.parse::<Action>().map_err(Error::Argument))
        .collect::<Result<Vec<_>>>()?;
    let reward = num(fields[base + n_agents])?;
    let success = match fields[base + n_agents + 1] {
        "1" => true,
        "0" => false,
        v => return Err(bad("success flag", v)),
    };
    Ok(TrajectoryRecord {
        timestep,
        positions,
        joint_action,
        reward,
        success,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStreams;

    fn cfg(s: Scenario, n: usize, mode: RewardMode) -> WorldConfig {
        WorldConfig::new(s, n, mode)
    }

    #[test]
    fn jitter_free_same_landmark_layout() {
        let mut c = cfg(Scenario::SameLandmark, 2, RewardMode::Sparse);
        c.start_jitter = 0.0;
        let (state, obs) = reset(&c, &mut SeedStreams::new(0).stream(1)).unwrap();
        assert_eq!(state.agent_positions[0], [-0.8, -0.8]);
        assert_eq!(state.landmark_positions, vec![[0.8, 0.8]]);
        assert_eq!(obs[0][0], 0.8 - -0.8);
        assert_eq!(obs[0][1], 0.8 - -0.8);
        assert_eq!(state.timestep, 0);
    }

    #[test]
    fn different_landmark_layout_puts_agents_between_landmarks() {
        let mut c = cfg(Scenario::DifferentLandmark, 2, RewardMode::Sparse);
        c.start_jitter = 0.0;
        let (state, _) = reset(&c, &mut SeedStreams::new(0).stream(1)).unwrap();
        let l = &state.landmark_positions;
        assert_eq!(l.len(), 2);
        assert_eq!(l[0], [-l[1][0], -l[1][1]]);
        for p in &state.agent_positions {
            assert!(p[0] > l[0][0] && p[0] < l[1][0]);
        }
        assert_eq!(state.landmark_assignment, vec![0, 1]);
    }

    #[test]
    fn mismatched_landmark_count_is_rejected() {
        let mut c = cfg(Scenario::SameLandmark, 2, RewardMode::Sparse);
        c.n_landmarks = 2;
        assert!(matches!(
            reset(&c, &mut SeedStreams::new(0).stream(1)),
            Err(Error::Config { .. })
        ));
        let c = cfg(Scenario::SameLandmark, 3, RewardMode::Sparse);
        assert!(c.validate().is_err());
    }

    #[test]
    fn assignments() {
        assert_eq!(landmark_assignment(Scenario::SameLandmark, 4), vec![0, 0, 0, 0]);
        assert_eq!(landmark_assignment(Scenario::DifferentLandmark, 2), vec![0, 1]);
        assert_eq!(landmark_assignment(Scenario::DifferentLandmark, 4), vec![0, 1, 0, 1]);
    }

    #[test]
    fn observation_on_landmark_is_zero_and_antisymmetric() {
        let state = EnvState {
            agent_positions: vec![[0.8, 0.8], [0.1, -0.3]],
            landmark_positions: vec![[0.8, 0.8]],
            landmark_assignment: vec![0, 0],
            timestep: 0,
        };
        let obs = observe(&state);
        assert_eq!(&obs[0][..2], &[0.0, 0.0]);
        assert_eq!(obs[0][2], -obs[1][2]);
        assert_eq!(obs[0][3], -obs[1][3]);
    }

    #[test]
    fn stay_keeps_positions_and_clamp_holds_at_boundary() {
        let c = cfg(Scenario::SameLandmark, 2, RewardMode::Sparse);
        let (mut state, _) = reset(&c, &mut SeedStreams::new(3).stream(1)).unwrap();
        let before = state.agent_positions.clone();
        step(&c, &mut state, &[Action::Stay, Action::Stay]).unwrap();
        assert_eq!(state.agent_positions, before);
        assert_eq!(state.timestep, 1);

        state.agent_positions[0] = [1.0, 0.0];
        step(&c, &mut state, &[Action::Right, Action::Stay]).unwrap();
        assert_eq!(state.agent_positions[0], [1.0, 0.0]);
    }

    #[test]
    fn step_after_done_errors() {
        let mut c = cfg(Scenario::SameLandmark, 2, RewardMode::Sparse);
        c.episode_length = 2;
        let (mut state, _) = reset(&c, &mut SeedStreams::new(0).stream(1)).unwrap();
        assert!(!step(&c, &mut state, &[Action::Up, Action::Up]).unwrap().done);
        assert!(step(&c, &mut state, &[Action::Up, Action::Up]).unwrap().done);
        assert!(matches!(
            step(&c, &mut state, &[Action::Up, Action::Up]),
            Err(Error::EpisodeExhausted { .. })
        ));
    }

    #[test]
    fn sparse_reward_requires_every_agent() {
        let c = cfg(Scenario::DifferentLandmark, 2, RewardMode::Sparse);
        let mut state = EnvState {
            agent_positions: vec![[-0.8, 0.0], [0.8, 0.0]],
            landmark_positions: c.landmark_positions(),
            landmark_assignment: landmark_assignment(c.scenario, 2),
            timestep: 0,
        };
        assert_eq!(sparse_reward(&c, &state), (1.0, true));
        state.agent_positions[1] = [0.8 - (c.success_radius + 1e-9), 0.0];
        assert_eq!(sparse_reward(&c, &state), (0.0, false));
    }

    #[test]
    fn dense_reward_zero_on_landmarks_and_collision_penalty() {
        let c = cfg(Scenario::DifferentLandmark, 2, RewardMode::Dense);
        let state = EnvState {
            agent_positions: vec![[-0.8, 0.0], [0.8, 0.0]],
            landmark_positions: c.landmark_positions(),
            landmark_assignment: vec![0, 1],
            timestep: 0,
        };
        assert_eq!(dense_reward(&c, &state), 0.0);

        let c = cfg(Scenario::SameLandmark, 2, RewardMode::Dense);
        let state = EnvState {
            agent_positions: vec![[0.8, 0.8], [0.8, 0.8]],
            landmark_positions: c.landmark_positions(),
            landmark_assignment: vec![0, 0],
            timestep: 0,
        };
        // Zero distance term, one colliding pair.
        assert_eq!(dense_reward(&c, &state), -c.collision_penalty);
    }

    #[test]
    fn trajectory_line_parses_back() {
        let c = cfg(Scenario::SameLandmark, 2, RewardMode::Dense);
        let (mut state, _) = reset(&c, &mut SeedStreams::new(11).stream(1)).unwrap();
        let ja = [Action::Up, Action::Left];
        let r = step(&c, &mut state, &ja).unwrap();
        let line = trajectory_line(&state, &ja, &r);
        let rec = parse_trajectory_line(&line, 2).unwrap();
        assert_eq!(rec.timestep, 1);
        assert_eq!(rec.positions, state.agent_positions);
        assert_eq!(rec.joint_action, ja.to_vec());
        assert_eq!(rec.reward.to_bits(), r.extrinsic_reward.to_bits());
        assert_eq!(rec.success, r.success);
    }
}
