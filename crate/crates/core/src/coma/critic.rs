//! Centralised action-value critic shared by all agents.

use ndarray::Array2;

use crate::env::{Action, Observation, N_ACTIONS};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, Arch, Network, OptimizerState};
use crate::rng::{stream, SeedStreams};

use super::policy::Probs;

/// Critic input width for `n_agents` agents with observations of length `obs_dim`.
pub fn critic_input_dim(n_agents: usize, obs_dim: usize) -> usize {
    n_agents * obs_dim + (n_agents - 1) * N_ACTIONS + n_agents
}

/// `joint obs ++ onehot(u^m) for m != n ++ onehot(n)`.
pub fn critic_input(joint_obs: &[Observation], joint_action: &[Action], n: usize) -> Vec<f64> {
    let n_agents = joint_obs.len();
    let mut v: Vec<f64> = joint_obs.concat();
    for (m, &a) in joint_action.iter().enumerate() {
        if m != n {
            v.extend_from_slice(&a.one_hot());
        }
    }
    let mut id = vec![0.0; n_agents];
    id[n] = 1.0;
    v.extend(id);
    v
}

/// `Q_u - sum_u' pi(u') Q_u'`.
pub fn advantage_from_q(q: &[f64], action: usize, pi: &Probs) -> f64 {
    let baseline: f64 = q.iter().zip(pi).map(|(qv, p)| qv * p).sum();
    q[action] - baseline
}

/// λ-returns with a zero bootstrap after the last step.
///
/// `G_t = r_t + gamma ((1 - lambda) q_{t+1} + lambda G_{t+1})`, `G_T = r_T`.
pub fn td_lambda_targets(rewards: &[f64], q_taken: &[f64], gamma: f64, td_lambda: f64) -> Result<Vec<f64>> {
    if rewards.len() != q_taken.len() {
        return Err(Error::Shape(format!(
            "{} rewards but {} q-values",
            rewards.len(),
            q_taken.len()
        )));
    }
    let t_len = rewards.len();
    let mut g = vec![0.0; t_len];
    for t in (0..t_len).rev() {
        g[t] = if t + 1 == t_len {
            rewards[t]
        } else {
            rewards[t] + gamma * ((1.0 - td_lambda) * q_taken[t + 1] + td_lambda * g[t + 1])
        };
    }
    Ok(g)
}

#[derive(Debug, Clone)]
pub struct CentralCritic {
    net: Network,
    optimizer: OptimizerState,
    n_agents: usize,
}

impl CentralCritic {
    pub fn new(n_agents: usize, obs_dim: usize, arch: &Arch, adam: AdamConfig, streams: &SeedStreams) -> Result<Self> {
        let spec = arch.single(critic_input_dim(n_agents, obs_dim), N_ACTIONS);
        let net = Network::init(spec, &mut streams.stream(stream::CRITIC))?;
        Ok(Self::from_network(net, n_agents, adam))
    }

    pub fn from_network(net: Network, n_agents: usize, adam: AdamConfig) -> Self {
        let optimizer = OptimizerState::new(&net, adam);
        Self {
            net,
            optimizer,
            n_agents,
        }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    /// Q-values of agent `n`'s five candidate actions, others' actions held fixed.
    pub fn q_values(&self, joint_obs: &[Observation], joint_action: &[Action], n: usize) -> Result<Vec<f64>> {
        Ok(self
            .net
            .predict_one(&critic_input(joint_obs, joint_action, n), &[])?
            .remove(0))
    }

    /// Batched Q-values, one row per critic input row.
    pub fn q_batch(&self, inputs: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.net.predict(inputs.view(), &[])?.remove(0))
    }

    /// Mean squared error of `Q(x, u)` against `targets`, with its gradients.
    pub fn loss_and_gradients(
        &self,
        inputs: &Array2<f64>,
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, crate::nn::Gradients)> {
        let b = inputs.nrows();
        if actions.len() != b || targets.len() != b || b == 0 {
            return Err(Error::Shape(format!(
                "critic batch of {b} rows with {} actions and {} targets",
                actions.len(),
                targets.len()
            )));
        }
        let (out, cache) = self.net.forward(inputs.view(), &[])?;
        let q = &out[0];
        let mut grad = Array2::<f64>::zeros((b, N_ACTIONS));
        let mut loss = 0.0;
        for r in 0..b {
            let diff = q[[r, actions[r]]] - targets[r];
            loss += diff * diff;
            grad[[r, actions[r]]] = 2.0 * diff / b as f64;
        }
        Ok((loss / b as f64, self.net.backward(&cache, &[grad.view()])?))
    }

    /// One Adam step on the squared TD error. Returns the pre-step loss.
    pub fn update(&mut self, inputs: &Array2<f64>, actions: &[usize], targets: &[f64]) -> Result<f64> {
        let (loss, grads) = self.loss_and_gradients(inputs, actions, targets)?;
        self.optimizer.step(&mut self.net, &grads)?;
        Ok(loss)
    }
}

/// Counterfactual advantage of agent `n`'s taken action.
pub fn counterfactual_advantage(
    critic: &CentralCritic,
    joint_obs: &[Observation],
    joint_action: &[Action],
    n: usize,
    pi_n: &Probs,
) -> Result<f64> {
    let q = critic.q_values(joint_obs, joint_action, n)?;
    Ok(advantage_from_q(&q, joint_action[n].index(), pi_n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_critic_gives_zero_advantage() {
        let q = [1.5; N_ACTIONS];
        let pi = [0.1, 0.3, 0.2, 0.25, 0.15];
        for u in 0..N_ACTIONS {
            assert!(advantage_from_q(&q, u, &pi).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_policy_gives_zero_advantage() {
        let q = [0.3, -1.0, 2.0, 0.7, 0.1];
        let mut pi = [0.0; N_ACTIONS];
        pi[2] = 1.0;
        assert_eq!(advantage_from_q(&q, 2, &pi), 0.0);
    }

    #[test]
    fn lambda_one_is_monte_carlo_and_lambda_zero_is_one_step() {
        let r = [1.0, 0.0, 2.0, -1.0];
        let q = [9.0, 4.0, -3.0, 7.0];
        let g = 0.9;
        let mc = td_lambda_targets(&r, &q, g, 1.0).unwrap();
        for t in 0..4 {
            let want: f64 = (t..4).map(|k| g.powi((k - t) as i32) * r[k]).sum();
            assert!((mc[t] - want).abs() < 1e-12);
        }
        let one = td_lambda_targets(&r, &q, g, 0.0).unwrap();
        for t in 0..3 {
            assert!((one[t] - (r[t] + g * q[t + 1])).abs() < 1e-12);
        }
        assert_eq!(one[3], r[3]);
    }

    #[test]
    fn critic_input_layout() {
        let obs = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let x = critic_input(&obs, &[Action::Up, Action::Left], 0);
        let mut want = vec![1.0, 2.0, 3.0, 4.0];
        want.extend(Action::Left.one_hot());
        want.extend([1.0, 0.0]);
        assert_eq!(x, want);
        assert_eq!(x.len(), critic_input_dim(2, 2));
    }
}
