//! Counterfactual multi-agent actor-critic trained on mixed rewards.
//!
//! Each round rolls out a few episodes with the current policies, scores every
//! transition with the (not yet updated) curiosity bank, fits the shared critic
//! to per-agent λ-returns, takes one policy-gradient step per agent using
//! counterfactual advantages, and finally trains the curiosity modules on the
//! same transitions.

pub mod critic;
pub mod policy;

use std::io::{BufRead, Write};

use ndarray::Array2;

pub use critic::{advantage_from_q, counterfactual_advantage, critic_input, td_lambda_targets, CentralCritic};
pub use policy::{actor_loss_and_gradients, actor_loss_exact, floored_softmax, ActorSample, PolicySet, Probs};

use crate::curiosity::{mix_one, CuriosityBank, CuriosityKind, Transition};
use crate::env::{NavEnv, WorldConfig};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{read_network_lines, write_network, Lines};
use crate::nn::{AdamConfig, Arch};
use crate::rng::{stream, Rng, SeedStreams};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
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
    /// Fraction of `total_episodes` over which the exploration floor anneals.
    pub epsilon_anneal_fraction: f64,
    pub total_episodes: usize,
    pub intrinsic_lambda: f64,
    pub intrinsic_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            td_lambda: 0.8,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            curiosity_lr: 1e-3,
            episodes_per_update: 8,
            critic_steps: 1,
            entropy_coeff: 0.01,
            epsilon_start: 0.1,
            epsilon_end: 0.02,
            epsilon_anneal_fraction: 0.5,
            total_episodes: 30_000,
            intrinsic_lambda: 0.05,
            intrinsic_clip: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(Error::config(key, msg)) };
        check((0.0..1.0).contains(&self.gamma), "gamma", "must lie in [0, 1)")?;
        check((0.0..=1.0).contains(&self.td_lambda), "td_lambda", "must lie in [0, 1]")?;
        for (k, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("curiosity_lr", self.curiosity_lr),
        ] {
            check(v > 0.0 && v.is_finite(), k, "must be positive")?;
        }
        check(self.episodes_per_update >= 1, "episodes_per_update", "must be >= 1")?;
        check(self.critic_steps >= 1, "critic_steps", "must be >= 1")?;
        check(self.entropy_coeff >= 0.0, "entropy_coeff", "must be >= 0")?;
        for (k, v) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            check((0.0..=0.2).contains(&v), k, "must lie in [0, 0.2]")?;
        }
        check(
            (0.0..=1.0).contains(&self.epsilon_anneal_fraction),
            "epsilon_anneal_fraction",
            "must lie in [0, 1]",
        )?;
        check(self.total_episodes >= 1, "total_episodes", "must be >= 1")?;
        check(self.intrinsic_lambda >= 0.0, "lambda", "must be >= 0")?;
        check(self.intrinsic_clip > 0.0, "clip_max", "must be > 0")
    }

    /// Exploration floor for an episode: linear from start to end, then flat.
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        let span = self.epsilon_anneal_fraction * self.total_episodes as f64;
        let frac = if span > 0.0 { episode as f64 / span } else { 1.0 };
        if frac >= 1.0 {
            return self.epsilon_end;
        }
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// One rolled-out episode with everything the updates need.
#[derive(Debug, Clone, Default)]
pub struct EpisodeBuffer {
    pub transitions: Vec<Transition>,
    /// Per-step, per-agent action probabilities used for sampling.
    pub probs: Vec<Vec<Probs>>,
    pub success: Vec<bool>,
    /// Per-step, per-agent mixed rewards, filled in by the trainer.
    pub mixed_rewards: Vec<Vec<f64>>,
    pub intrinsic: Vec<Vec<f64>>,
    /// Per-step, per-agent critic outputs before this round's critic update.
    pub critic_q: Vec<Vec<Vec<f64>>>,
}

impl EpisodeBuffer {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub extrinsic_return: f64,
    /// Fraction of steps on which every agent sat on its landmark.
    pub normalized_reward: f64,
    pub success_any: bool,
    pub mean_intrinsic: f64,
    /// Pre-update loss of each curiosity module in the round this episode belongs to.
    pub curiosity_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub episodes: Vec<EpisodeMetrics>,
    pub critic_loss: f64,
    pub actor_losses: Vec<f64>,
    pub curiosity_losses: Vec<f64>,
}

/// Everything one training run owns.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    env: NavEnv,
    policies: PolicySet,
    critic: CentralCritic,
    bank: CuriosityBank,
    env_rng: Rng,
    action_rng: Rng,
    episodes_done: usize,
}

impl Trainer {
    /// Builds every component from independent streams of `seed`.
    pub fn new(world: WorldConfig, cfg: TrainConfig, arch: &Arch, kind: CuriosityKind, seed: u64) -> Result<Self> {
        cfg.validate()?;
        world.validate()?;
        let streams = SeedStreams::new(seed);
        let (n, d) = (world.n_agents, world.obs_dim());
        let policies = PolicySet::new(n, d, arch, AdamConfig::with_lr(cfg.actor_lr), &streams)?;
        let critic = CentralCritic::new(n, d, arch, AdamConfig::with_lr(cfg.critic_lr), &streams)?;
        let bank = CuriosityBank::new(kind, &world, arch, AdamConfig::with_lr(cfg.curiosity_lr), &streams)?;
        let mut env_rng = streams.stream(stream::ENV);
        let (env, _) = NavEnv::new(world, &mut env_rng)?;
        Ok(Self {
            cfg,
            env,
            policies,
            critic,
            bank,
            env_rng,
            action_rng: streams.stream(stream::ACTIONS),
            episodes_done: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn world(&self) -> &WorldConfig {
        self.env.config()
    }

    pub fn policies(&self) -> &PolicySet {
        &self.policies
    }

    pub fn critic(&self) -> &CentralCritic {
        &self.critic
    }

    pub fn bank(&self) -> &CuriosityBank {
        &self.bank
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    /// Plays one episode with exploration floor `eps`. Rewards are not mixed yet.
    pub fn rollout(&mut self, eps: f64) -> Result<EpisodeBuffer> {
        let mut obs = self.env.reset(&mut self.env_rng)?;
        let len = self.env.config().episode_length;
        let mut buf = EpisodeBuffer {
            transitions: Vec::with_capacity(len),
            probs: Vec::with_capacity(len),
            success: Vec::with_capacity(len),
            ..EpisodeBuffer::default()
        };
        loop {
            let (actions, probs) = self.policies.select_actions(&obs, eps, &mut self.action_rng)?;
            let step = self.env.step(&actions)?;
            let next = step.next_joint_observation;
            buf.transitions.push(Transition {
                joint_obs: std::mem::replace(&mut obs, next.clone()),
                joint_action: actions,
                extrinsic_reward: step.extrinsic_reward,
                next_joint_obs: next,
                done: step.done,
            });
            buf.probs.push(probs);
            buf.success.push(step.success);
            if step.done {
                return Ok(buf);
            }
        }
    }

    /// Fills in intrinsic and mixed rewards using the current bank.
    fn score(&self, episodes: &mut [EpisodeBuffer]) -> Result<()> {
        let flat: Vec<Transition> = episodes.iter().flat_map(|e| e.transitions.iter().cloned()).collect();
        let intrinsic = self.bank.intrinsic_rewards_batch(&flat)?;
        let mut it = intrinsic.into_iter();
        let (lambda, clip) = (self.cfg.intrinsic_lambda, self.cfg.intrinsic_clip);
        for ep in episodes.iter_mut() {
            ep.intrinsic = it.by_ref().take(ep.len()).collect();
            ep.mixed_rewards = ep
                .transitions
                .iter()
                .zip(&ep.intrinsic)
                .map(|(t, i)| {
                    i.iter()
                        .map(|&iv| mix_one(t.extrinsic_reward, iv, lambda, clip))
                        .collect()
                })
                .collect();
        }
        Ok(())
    }

    /// Critic inputs and taken actions for every (step, agent) pair, step-major.
    fn critic_batch(&self, episodes: &[EpisodeBuffer]) -> (Array2<f64>, Vec<usize>) {
        let n = self.env.config().n_agents;
        let width = self.critic.network().spec().input_dim;
        let rows: usize = episodes.iter().map(|e| e.len() * n).sum();
        let mut data = Vec::with_capacity(rows * width);
        let mut actions = Vec::with_capacity(rows);
        for ep in episodes {
            for t in &ep.transitions {
                for a in 0..n {
                    data.extend(critic_input(&t.joint_obs, &t.joint_action, a));
                    actions.push(t.joint_action[a].index());
                }
            }
        }
        (
            Array2::from_shape_vec((rows, width), data).expect("fixed width"),
            actions,
        )
    }

    /// Stores current critic outputs and returns λ-return targets, step-major.
    fn evaluate_critic(&self, episodes: &mut [EpisodeBuffer], inputs: &Array2<f64>) -> Result<Vec<f64>> {
        let n = self.env.config().n_agents;
        let q = self.critic.q_batch(inputs)?;
        let mut row = 0;
        let mut targets = Vec::with_capacity(inputs.nrows());
        for ep in episodes.iter_mut() {
            ep.critic_q = (0..ep.len())
                .map(|_| {
                    let per_agent = (0..n).map(|a| q.row(row + a).to_vec()).collect();
                    row += n;
                    per_agent
                })
                .collect();
            let mut ep_targets = vec![vec![0.0; n]; ep.len()];
            for a in 0..n {
                let rewards: Vec<f64> = ep.mixed_rewards.iter().map(|r| r[a]).collect();
                let q_taken: Vec<f64> = (0..ep.len())
                    .map(|t| ep.critic_q[t][a][ep.transitions[t].joint_action[a].index()])
                    .collect();
                let g = td_lambda_targets(&rewards, &q_taken, self.cfg.gamma, self.cfg.td_lambda)?;
                for (t, v) in g.into_iter().enumerate() {
                    ep_targets[t][a] = v;
                }
            }
            targets.extend(ep_targets.into_iter().flatten());
        }
        Ok(targets)
    }

    /// One critic fit on `episodes` as a batch. Returns the loss before the first step.
    fn fit_critic(&mut self, episodes: &mut [EpisodeBuffer]) -> Result<f64> {
        let (inputs, actions) = self.critic_batch(episodes);
        let targets = self.evaluate_critic(episodes, &inputs)?;
        let mut first = None;
        for _ in 0..self.cfg.critic_steps {
            let loss = self.critic.update(&inputs, &actions, &targets)?;
            first.get_or_insert(loss);
        }
        Ok(first.expect("critic_steps >= 1"))
    }

    /// Critic-only training on a fixed set of episodes, for diagnostics.
    pub fn critic_round(&mut self, episodes: &mut [EpisodeBuffer]) -> Result<f64> {
        self.score(episodes)?;
        self.fit_critic(episodes)
    }

    /// Rolls out `episodes_per_update` episodes and updates every component once.
    pub fn train_round(&mut self) -> Result<RoundReport> {
        let eps = self.cfg.epsilon_at(self.episodes_done);
        let mut episodes = (0..self.cfg.episodes_per_update)
            .map(|_| self.rollout(eps))
            .collect::<Result<Vec<_>>>()?;
        self.train_on(&mut episodes, eps)
    }

    /// Updates critic, policies and curiosity modules from already rolled-out episodes.
    pub fn train_on(&mut self, episodes: &mut [EpisodeBuffer], eps: f64) -> Result<RoundReport> {
        let n = self.env.config().n_agents;
        self.score(episodes)?;
        let critic_loss = self.fit_critic(episodes)?;

        let mut actor_losses = Vec::with_capacity(n);
        for a in 0..n {
            let samples: Vec<ActorSample<'_>> = episodes
                .iter()
                .flat_map(|ep| {
                    ep.transitions.iter().enumerate().map(move |(t, tr)| {
                        let u = tr.joint_action[a].index();
                        ActorSample {
                            obs: &tr.joint_obs[a],
                            action: u,
                            advantage: advantage_from_q(&ep.critic_q[t][a], u, &ep.probs[t][a]),
                        }
                    })
                })
                .collect();
            actor_losses.push(self.policies.update(a, &samples, eps, self.cfg.entropy_coeff)?);
        }

        let curiosity_losses = if self.bank.kind() == CuriosityKind::None {
            Vec::new()
        } else {
            let flat: Vec<Transition> = episodes.iter().flat_map(|e| e.transitions.iter().cloned()).collect();
            self.bank.update(&flat)?
        };

        let len = self.env.config().episode_length as f64;
        let metrics = episodes
            .iter()
            .map(|ep| {
                let on_target = ep.success.iter().filter(|&&s| s).count();
                let n_i = (ep.len() * n).max(1) as f64;
                let episode = self.episodes_done;
                self.episodes_done += 1;
                EpisodeMetrics {
                    episode,
                    extrinsic_return: ep.transitions.iter().map(|t| t.extrinsic_reward).sum(),
                    normalized_reward: on_target as f64 / len,
                    success_any: on_target > 0,
                    mean_intrinsic: ep.intrinsic.iter().flatten().sum::<f64>() / n_i,
                    curiosity_loss: curiosity_losses.clone(),
                }
            })
            .collect();
        Ok(RoundReport {
            episodes: metrics,
            critic_loss,
            actor_losses,
            curiosity_losses,
        })
    }

    /// Writes policies, critic and curiosity bank.
    pub fn write_checkpoint(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{TRAINER_HEADER}")?;
        writeln!(out, "policies {}", self.policies.n_agents())?;
        for p in self.policies.networks() {
            write_network(p, out)?;
        }
        write_network(self.critic.network(), out)?;
        self.bank.write_checkpoint(out)
    }

    /// Replaces all parameters with those of a checkpoint written by a trainer
    /// of the same configuration. Optimizer moments restart from zero.
    pub fn restore_checkpoint(&mut self, input: &mut impl BufRead) -> Result<()> {
        let mut lines = Lines::new(input);
        let header = lines.next_line()?;
        if header != TRAINER_HEADER {
            return Err(lines.err(format!("unsupported header `{header}`")));
        }
        let l = lines.next_line()?;
        let count: usize = lines.field(&l, "policies")?.parse().map_err(|e| lines.err(e))?;
        if count != self.policies.n_agents() {
            return Err(lines.err(format!("{count} policies, trainer has {}", self.policies.n_agents())));
        }
        let nets = (0..count)
            .map(|_| read_network_lines(&mut lines))
            .collect::<Result<Vec<_>>>()?;
        let critic = read_network_lines(&mut lines)?;
        let bank = CuriosityBank::read_checkpoint(input, AdamConfig::with_lr(self.cfg.curiosity_lr))?;
        let same = |a: &crate::nn::Network, b: &crate::nn::Network| a.spec() == b.spec();
        if !nets.iter().zip(self.policies.networks()).all(|(a, b)| same(a, b))
            || !same(&critic, self.critic.network())
            || bank.kind() != self.bank.kind()
        {
            return Err(Error::Checkpoint(
                "checkpoint does not match this trainer's configuration".into(),
            ));
        }
        self.policies = PolicySet::from_networks(nets, AdamConfig::with_lr(self.cfg.actor_lr))?;
        self.critic = CentralCritic::from_network(
            critic,
            self.policies.n_agents(),
            AdamConfig::with_lr(self.cfg.critic_lr),
        );
        self.bank = bank;
        Ok(())
    }
}

pub const TRAINER_HEADER: &str = "mcm-trainer v1";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{RewardMode, Scenario};

    fn small() -> (WorldConfig, TrainConfig, Arch) {
        let world = WorldConfig::new(Scenario::SameLandmark, 2, RewardMode::Sparse);
        let cfg = TrainConfig {
            episodes_per_update: 2,
            total_episodes: 100,
            ..TrainConfig::default()
        };
        let arch = Arch {
            hidden_dims: vec![16, 16],
            ..Arch::default()
        };
        (world, cfg, arch)
    }

    #[test]
    fn epsilon_anneals_then_stays() {
        let cfg = TrainConfig {
            total_episodes: 1000,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.epsilon_at(0), 0.1);
        assert!((cfg.epsilon_at(250) - 0.06).abs() < 1e-15);
        assert_eq!(cfg.epsilon_at(500), 0.02);
        assert_eq!(cfg.epsilon_at(900), 0.02);
    }

    #[test]
    fn training_is_deterministic() {
        let (w, c, a) = small();
        let mut t1 = Trainer::new(w.clone(), c.clone(), &a, CuriosityKind::Mcm, 7).unwrap();
        let mut t2 = Trainer::new(w, c, &a, CuriosityKind::Mcm, 7).unwrap();
        for _ in 0..3 {
            assert_eq!(t1.train_round().unwrap(), t2.train_round().unwrap());
        }
        assert_eq!(t1.policies().networks(), t2.policies().networks());
    }

    #[test]
    fn probabilities_keep_the_floor_after_updates() {
        let (w, c, a) = small();
        let mut t = Trainer::new(w, c, &a, CuriosityKind::IcmIndiv, 8).unwrap();
        for _ in 0..3 {
            t.train_round().unwrap();
        }
        let eps = t.config().epsilon_at(t.episodes_done());
        let obs = t.env.observe();
        for n in 0..2 {
            let pi = t.policies().probabilities(n, &obs[n], eps).unwrap();
            assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(pi.iter().all(|&p| p >= eps - 1e-15));
        }
    }

    #[test]
    fn icm_joint_gives_every_agent_the_same_targets() {
        let (w, c, a) = small();
        let mut t = Trainer::new(w, c, &a, CuriosityKind::IcmJoint, 9).unwrap();
        let mut eps = vec![t.rollout(0.1).unwrap()];
        t.score(&mut eps).unwrap();
        let (inputs, _) = t.critic_batch(&eps);
        let targets = t.evaluate_critic(&mut eps, &inputs).unwrap();
        for r in &eps[0].mixed_rewards {
            assert_eq!(r[0], r[1]);
        }
        assert_eq!(targets.len(), 2 * eps[0].len());
        assert!(eps[0].intrinsic.iter().all(|i| i[0] == i[1]));
    }

    #[test]
    fn checkpoint_restores_parameters() {
        let (w, c, a) = small();
        let mut t = Trainer::new(w.clone(), c.clone(), &a, CuriosityKind::McmSep, 10).unwrap();
        t.train_round().unwrap();
        let mut buf = Vec::new();
        t.write_checkpoint(&mut buf).unwrap();
        let mut fresh = Trainer::new(w, c, &a, CuriosityKind::McmSep, 11).unwrap();
        fresh.restore_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(fresh.policies().networks(), t.policies().networks());
        assert_eq!(fresh.critic().network(), t.critic().network());
        assert_eq!(fresh.bank().modules(), t.bank().modules());
    }
}
