//! Shared fixtures for the kernel benchmarks in `benches/`.

use mcm_core::{Action, NavEnv, RewardMode, Scenario, SeedStreams, Transition, WorldConfig};
use ndarray::Array2;
use rand::Rng;

pub fn world(n_agents: usize) -> WorldConfig {
    WorldConfig::new(Scenario::SameLandmark, n_agents, RewardMode::Sparse)
}

/// `count` transitions collected under uniformly random joint actions.
pub fn random_transitions(world: &WorldConfig, count: usize, seed: u64) -> Vec<Transition> {
    let mut rng = SeedStreams::new(seed).stream(0);
    let (mut env, mut obs) = NavEnv::new(world.clone(), &mut rng).expect("valid world");
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let actions: Vec<Action> = (0..world.n_agents)
            .map(|_| Action::from_index(rng.gen_range(0..5)).expect("in range"))
            .collect();
        let step = env.step(&actions).expect("step");
        let next = step.next_joint_observation;
        out.push(Transition {
            joint_obs: std::mem::replace(&mut obs, next.clone()),
            joint_action: actions,
            extrinsic_reward: step.extrinsic_reward,
            next_joint_obs: next,
            done: step.done,
        });
        if step.done {
            obs = env.reset(&mut rng).expect("reset");
        }
    }
    out
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = SeedStreams::new(seed).stream(1);
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}
