//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use mcm_core::env::EnvState;
use mcm_core::nn::network::leaky_relu;
use mcm_core::{Action, CuriosityBank, CuriosityKind, Network, Transition, WorldConfig};
use rand::Rng;

/// Scalar-loop forward pass over the public parameters.
pub fn forward_loops(net: &Network, x: &[f64], extras: &[&[f64]]) -> Vec<Vec<f64>> {
    let slope = net.spec().leaky_slope;
    let mut h = x.to_vec();
    for layer in &net.params().trunk {
        let mut next = vec![0.0; layer.fan_out()];
        for (j, out) in next.iter_mut().enumerate() {
            let mut acc = layer.bias[j];
            for (i, hi) in h.iter().enumerate() {
                acc += hi * layer.weight[[i, j]];
            }
            *out = leaky_relu(acc, slope);
        }
        h = next;
    }
    net.params()
        .heads
        .iter()
        .zip(extras)
        .map(|(layer, extra)| {
            let input: Vec<f64> = h.iter().chain(extra.iter()).copied().collect();
            (0..layer.fan_out())
                .map(|j| {
                    let mut acc = layer.bias[j];
                    for (i, v) in input.iter().enumerate() {
                        acc += v * layer.weight[[i, j]];
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn sq(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn one_hot(a: Action) -> Vec<f64> {
    let mut v = vec![0.0; 5];
    v[a.index()] = 1.0;
    v
}

/// Inputs and targets assembled by hand from the raw transition fields.
struct Parts {
    indiv_x: Vec<Vec<f64>>,
    others_x: Vec<Vec<f64>>,
    joint_x: Vec<f64>,
    next: Vec<Vec<f64>>,
    next_joint: Vec<f64>,
}

fn parts(t: &Transition) -> Parts {
    let n = t.joint_obs.len();
    let indiv_x = (0..n)
        .map(|k| {
            t.joint_obs[k]
                .iter()
                .copied()
                .chain(one_hot(t.joint_action[k]))
                .collect()
        })
        .collect();
    let others_x = (0..n)
        .map(|k| {
            let mut v = Vec::new();
            for m in (0..n).filter(|&m| m != k) {
                v.extend(&t.joint_obs[m]);
            }
            for m in (0..n).filter(|&m| m != k) {
                v.extend(one_hot(t.joint_action[m]));
            }
            v
        })
        .collect();
    let mut joint_x: Vec<f64> = t.joint_obs.iter().flatten().copied().collect();
    for &a in &t.joint_action {
        joint_x.extend(one_hot(a));
    }
    Parts {
        indiv_x,
        others_x,
        joint_x,
        next: t.next_joint_obs.clone(),
        next_joint: t.next_joint_obs.iter().flatten().copied().collect(),
    }
}

/// Per-agent (individual error, joint error) of a two-headed module set.
fn mixed_terms(bank: &CuriosityBank, p: &Parts, k: usize) -> (f64, f64) {
    let out = forward_loops(&bank.modules()[k], &p.indiv_x[k], &[&[], &p.others_x[k]]);
    (sq(&out[0], &p.next[k]), sq(&out[1], &p.next_joint))
}

fn indiv_error(module: &Network, p: &Parts, k: usize) -> f64 {
    sq(&forward_loops(module, &p.indiv_x[k], &[&[]])[0], &p.next[k])
}

fn joint_error(module: &Network, p: &Parts) -> f64 {
    sq(&forward_loops(module, &p.joint_x, &[&[]])[0], &p.next_joint)
}

/// Intrinsic rewards recomputed from scratch for any curiosity kind.
pub fn oracle_intrinsic(bank: &CuriosityBank, t: &Transition) -> Vec<f64> {
    let p = parts(t);
    let n = t.joint_obs.len();
    let m = bank.modules();
    (0..n)
        .map(|k| match bank.kind() {
            CuriosityKind::None => 0.0,
            CuriosityKind::IcmIndiv => indiv_error(&m[k], &p, k),
            CuriosityKind::IcmJoint => joint_error(&m[0], &p),
            CuriosityKind::IcmMin => m
                .iter()
                .map(|module| indiv_error(module, &p, k))
                .fold(f64::INFINITY, f64::min),
            CuriosityKind::Mcm => {
                let (a, b) = mixed_terms(bank, &p, k);
                a + b
            }
            CuriosityKind::McmIndiv => mixed_terms(bank, &p, k).0,
            CuriosityKind::McmJoint => mixed_terms(bank, &p, k).1,
            CuriosityKind::McmSep => indiv_error(&m[k], &p, k) + joint_error(&m[n], &p),
        })
        .collect()
}

/// Per-module training losses on a batch, recomputed from scratch.
pub fn oracle_losses(bank: &CuriosityBank, batch: &[Transition]) -> Vec<f64> {
    let n = batch[0].joint_obs.len();
    let m = bank.modules();
    let b = batch.len() as f64;
    let ps: Vec<Parts> = batch.iter().map(parts).collect();
    let mean = |f: &dyn Fn(&Parts) -> f64| ps.iter().map(f).sum::<f64>() / b;
    match bank.kind() {
        CuriosityKind::None => vec![],
        CuriosityKind::IcmIndiv | CuriosityKind::IcmMin => {
            (0..n).map(|k| mean(&|p| indiv_error(&m[k], p, k))).collect()
        }
        CuriosityKind::IcmJoint => vec![mean(&|p| joint_error(&m[0], p))],
        CuriosityKind::Mcm | CuriosityKind::McmIndiv | CuriosityKind::McmJoint => (0..n)
            .map(|k| {
                mean(&|p| {
                    let (a, c) = mixed_terms(bank, p, k);
                    0.5 * (a + c)
                })
            })
            .collect(),
        CuriosityKind::McmSep => {
            let mut v: Vec<f64> = (0..n).map(|k| mean(&|p| indiv_error(&m[k], p, k))).collect();
            v.push(mean(&|p| joint_error(&m[n], p)));
            v
        }
    }
}

pub fn random_action(rng: &mut impl Rng) -> Action {
    Action::from_index(rng.gen_range(0..5)).unwrap()
}

/// A transition with random observations of the world's width.
pub fn random_transition(world: &WorldConfig, rng: &mut impl Rng) -> Transition {
    let d = world.obs_dim();
    let n = world.n_agents;
    let obs = |rng: &mut dyn rand::RngCore| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect()
    };
    Transition {
        joint_obs: obs(rng),
        joint_action: (0..n).map(|_| random_action(rng)).collect(),
        extrinsic_reward: 0.0,
        next_joint_obs: obs(rng),
        done: false,
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Success by explicit per-agent distance checks.
pub fn brute_success(world: &WorldConfig, positions: &[[f64; 2]]) -> bool {
    let landmarks = world.landmark_positions();
    let assignment = mcm_core::env::landmark_assignment(world.scenario, world.n_agents);
    let mut ok = true;
    for (n, p) in positions.iter().enumerate() {
        if dist(*p, landmarks[assignment[n]]) > world.success_radius {
            ok = false;
        }
    }
    ok
}

pub fn brute_dense(world: &WorldConfig, positions: &[[f64; 2]]) -> f64 {
    let mut total = 0.0;
    for l in world.landmark_positions() {
        let mut best = f64::INFINITY;
        for p in positions {
            best = best.min(dist(*p, l));
        }
        total -= best;
    }
    for a in 0..positions.len() {
        for b in a + 1..positions.len() {
            if dist(positions[a], positions[b]) < 2.0 * world.collision_radius {
                total -= world.collision_penalty;
            }
        }
    }
    total
}

pub fn state_at(world: &WorldConfig, positions: Vec<[f64; 2]>) -> EnvState {
    EnvState {
        agent_positions: positions,
        landmark_positions: world.landmark_positions(),
        landmark_assignment: mcm_core::env::landmark_assignment(world.scenario, world.n_agents),
        timestep: 0,
    }
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol * b.abs().max(1.0), "{what}: {a} vs {b}");
}
