//! Decentralised softmax policies with a uniform exploration floor.

use ndarray::{Array2, ArrayView2};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;

use crate::env::{Action, Observation, N_ACTIONS};
use crate::error::{Error, Result};
use crate::nn::dd::{forward_exact, DoubleF64};
use crate::nn::gradcheck::{compare_with_numeric, SuiteReport, DEFAULT_STEP};
use crate::nn::{AdamConfig, Arch, Gradients, Network, OptimizerState};
use crate::rng::{stream, SeedStreams};

pub type Probs = [f64; N_ACTIONS];

/// `(1 - 5 eps) softmax(logits) + eps`, plus the plain softmax.
pub fn floored_softmax(logits: &[f64], eps: f64) -> Result<(Probs, Probs)> {
    if logits.len() != N_ACTIONS {
        return Err(Error::Shape(format!("{} logits, expected {N_ACTIONS}", logits.len())));
    }
    if let Some(bad) = logits.iter().find(|z| !z.is_finite()) {
        return Err(Error::Numeric(format!("non-finite policy logit {bad}")));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = [0.0; N_ACTIONS];
    for (si, &z) in s.iter_mut().zip(logits) {
        *si = (z - max).exp();
    }
    let total: f64 = s.iter().sum();
    s.iter_mut().for_each(|v| *v /= total);
    let keep = 1.0 - N_ACTIONS as f64 * eps;
    let mut pi = [0.0; N_ACTIONS];
    for (p, &v) in pi.iter_mut().zip(&s) {
        *p = keep * v + eps;
    }
    Ok((pi, s))
}

/// One decision of one agent, kept for the actor update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorSample<'a> {
    pub obs: &'a [f64],
    pub action: usize,
    pub advantage: f64,
}

/// Mean over samples of `-A log pi(u|o) - c H(pi(.|o))` and its gradients.
pub fn actor_loss_and_gradients(
    net: &Network,
    samples: &[ActorSample<'_>],
    eps: f64,
    entropy_coeff: f64,
) -> Result<(f64, Gradients)> {
    if samples.is_empty() {
        return Err(Error::Argument("actor update needs at least one sample".into()));
    }
    let d = net.spec().input_dim;
    let b = samples.len();
    let mut x = Array2::<f64>::zeros((b, d));
    for (mut row, s) in x.outer_iter_mut().zip(samples) {
        if s.obs.len() != d {
            return Err(Error::Shape(format!(
                "observation of length {}, policy expects {d}",
                s.obs.len()
            )));
        }
        row.assign(&ArrayView2::from_shape((1, d), s.obs).expect("length checked").row(0));
    }
    let (out, cache) = net.forward(x.view(), &[])?;
    let logits = &out[0];
    let keep = 1.0 - N_ACTIONS as f64 * eps;
    let mut grad = Array2::<f64>::zeros((b, N_ACTIONS));
    let mut loss = 0.0;
    for (r, s) in samples.iter().enumerate() {
        let (pi, sm) = floored_softmax(logits.row(r).as_slice().expect("row-major"), eps)?;
        let logp: Probs = pi.map(f64::ln);
        let entropy: f64 = -pi.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
        loss += -s.advantage * logp[s.action] - entropy_coeff * entropy;
        let mean_logp: f64 = sm.iter().zip(&logp).map(|(a, l)| a * l).sum();
        let su = sm[s.action];
        for j in 0..N_ACTIONS {
            let delta = if j == s.action { 1.0 } else { 0.0 };
            let g_pg = -s.advantage * keep * su * (delta - sm[j]) / pi[s.action];
            let g_ent = entropy_coeff * keep * sm[j] * (logp[j] - mean_logp);
            grad[[r, j]] = (g_pg + g_ent) / b as f64;
        }
    }
    let grads = net.backward(&cache, &[grad.view()])?;
    Ok((loss / b as f64, grads))
}

/// The actor loss evaluated in double-double arithmetic, for gradient checks.
pub fn actor_loss_exact(net: &Network, samples: &[ActorSample<'_>], eps: f64, entropy_coeff: f64) -> Result<DoubleF64> {
    let keep = DoubleF64::new(1.0 - N_ACTIONS as f64 * eps);
    let mut total = DoubleF64::ZERO;
    for s in samples {
        let z = forward_exact(net, s.obs, &[])?.remove(0);
        let max = z.iter().copied().fold(z[0], DoubleF64::max);
        let e: Vec<DoubleF64> = z.iter().map(|&v| (v - max).exp()).collect();
        let sum: DoubleF64 = e.iter().copied().sum();
        let pi: Vec<DoubleF64> = e.iter().map(|&v| keep * (v / sum) + DoubleF64::new(eps)).collect();
        let logp: Vec<DoubleF64> = pi.iter().map(|p| p.ln()).collect();
        let entropy: DoubleF64 = -pi.iter().zip(&logp).map(|(&p, &l)| p * l).sum::<DoubleF64>();
        total = total - DoubleF64::new(s.advantage) * logp[s.action] - DoubleF64::new(entropy_coeff) * entropy;
    }
    Ok(total / DoubleF64::new(samples.len() as f64))
}

/// One policy network per agent with its optimizer.
#[derive(Debug, Clone)]
pub struct PolicySet {
    nets: Vec<Network>,
    optimizers: Vec<OptimizerState>,
}

impl PolicySet {
    /// Policy `n` is initialised from its own seed stream.
    pub fn new(n_agents: usize, obs_dim: usize, arch: &Arch, adam: AdamConfig, streams: &SeedStreams) -> Result<Self> {
        let nets = (0..n_agents)
            .map(|n| {
                Network::init(
                    arch.single(obs_dim, N_ACTIONS),
                    &mut streams.stream(stream::POLICY_BASE + n as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let optimizers = nets.iter().map(|n| OptimizerState::new(n, adam)).collect();
        Ok(Self { nets, optimizers })
    }

    pub fn from_networks(nets: Vec<Network>, adam: AdamConfig) -> Result<Self> {
        for (n, net) in nets.iter().enumerate() {
            if net.spec().output_dims != [N_ACTIONS] {
                return Err(Error::Shape(format!(
                    "policy {n} has outputs {:?}",
                    net.spec().output_dims
                )));
            }
        }
        let optimizers = nets.iter().map(|n| OptimizerState::new(n, adam)).collect();
        Ok(Self { nets, optimizers })
    }

    pub fn n_agents(&self) -> usize {
        self.nets.len()
    }

    pub fn networks(&self) -> &[Network] {
        &self.nets
    }

    pub fn networks_mut(&mut self) -> &mut [Network] {
        &mut self.nets
    }

    pub fn probabilities(&self, n: usize, obs: &[f64], eps: f64) -> Result<Probs> {
        let logits = self.nets[n].predict_one(obs, &[])?.remove(0);
        Ok(floored_softmax(&logits, eps)?.0)
    }

    /// Samples each agent's action independently from its floored policy.
    pub fn select_actions(
        &self,
        joint_obs: &[Observation],
        eps: f64,
        rng: &mut impl rand::Rng,
    ) -> Result<(Vec<Action>, Vec<Probs>)> {
        if joint_obs.len() != self.nets.len() {
            return Err(Error::Shape(format!(
                "{} observations for {} agents",
                joint_obs.len(),
                self.nets.len()
            )));
        }
        let mut actions = Vec::with_capacity(joint_obs.len());
        let mut probs = Vec::with_capacity(joint_obs.len());
        for (n, o) in joint_obs.iter().enumerate() {
            let pi = self.probabilities(n, o, eps)?;
            actions.push(sample(&pi, rng)?);
            probs.push(pi);
        }
        Ok((actions, probs))
    }

    /// One Adam step of agent `n`'s policy on its actor loss. Returns the loss.
    pub fn update(&mut self, n: usize, samples: &[ActorSample<'_>], eps: f64, entropy_coeff: f64) -> Result<f64> {
        let (loss, grads) = actor_loss_and_gradients(&self.nets[n], samples, eps, entropy_coeff)?;
        self.optimizers[n].step(&mut self.nets[n], &grads)?;
        Ok(loss)
    }
}

pub fn sample(pi: &Probs, rng: &mut impl rand::Rng) -> Result<Action> {
    let dist = WeightedIndex::new(pi).map_err(|e| Error::Numeric(format!("bad action distribution {pi:?}: {e}")))?;
    Ok(Action::from_index(dist.sample(rng)).expect("index below N_ACTIONS"))
}

/// Checks the actor gradient on `cases` random policies against exact
/// finite differences of [`actor_loss_exact`].
pub fn actor_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = SeedStreams::new(seed).stream(0);
    let mut max_err: f64 = 0.0;
    for _ in 0..cases {
        let d = rng.gen_range(2..12);
        let w = rng.gen_range(4..20);
        let arch = Arch {
            hidden_dims: vec![w, rng.gen_range(4..20)],
            ..Arch::default()
        };
        let net = Network::init(arch.single(d, N_ACTIONS), &mut rng)?;
        let obs: Vec<Vec<f64>> = (0..rng.gen_range(1..5))
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let samples: Vec<ActorSample> = obs
            .iter()
            .map(|o| ActorSample {
                obs: o,
                action: rng.gen_range(0..N_ACTIONS),
                advantage: rng.gen_range(-2.0..2.0),
            })
            .collect();
        let eps = rng.gen_range(0.0..0.15);
        let c = rng.gen_range(0.0..0.1);
        let (_, grads) = actor_loss_and_gradients(&net, &samples, eps, c)?;
        let base = actor_loss_exact(&net, &samples, eps, c)?;
        let report = compare_with_numeric(
            &net,
            &grads,
            |n| Ok((actor_loss_exact(n, &samples, eps, c)? - base).to_f64()),
            DEFAULT_STEP,
        )?;
        max_err = max_err.max(report.max_rel_error);
    }
    Ok(SuiteReport {
        name: "actor",
        cases,
        max_rel_error: max_err,
        tolerance: 1e-5,
    })
}
