mod common;

use common::{brute_dense, brute_success, state_at};
use mcm_core::env::{self, dense_reward, observe, sparse_reward};
use mcm_core::{Action, NavEnv, RewardMode, Scenario, SeedStreams, WorldConfig};
use proptest::prelude::*;

fn world_strategy() -> impl Strategy<Value = WorldConfig> {
    (
        prop_oneof![Just(Scenario::SameLandmark), Just(Scenario::DifferentLandmark)],
        prop_oneof![Just(2usize), Just(4usize)],
        prop_oneof![Just(RewardMode::Sparse), Just(RewardMode::Dense)],
    )
        .prop_map(|(s, n, r)| WorldConfig::new(s, n, r))
}

fn action_strategy() -> impl Strategy<Value = Action> {
    (0usize..5).prop_map(|i| Action::from_index(i).unwrap())
}

fn positions(n: usize, h: f64) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec(prop::array::uniform2(-h..=h), n)
}

proptest! {
    #[test]
    fn positions_stay_in_bounds(
        world in world_strategy(),
        seed in any::<u64>(),
        actions in prop::collection::vec(prop::collection::vec(action_strategy(), 4), 1..50),
    ) {
        let (mut e, _) = NavEnv::new(world.clone(), &mut SeedStreams::new(seed).stream(1)).unwrap();
        let h = world.half_extent;
        for joint in &actions {
            e.step(&joint[..world.n_agents]).unwrap();
            for p in &e.state().agent_positions {
                prop_assert!(p[0].abs() <= h && p[1].abs() <= h);
            }
        }
    }

    #[test]
    fn observations_reconstruct_the_state(world in world_strategy(), pos in positions(4, 1.0)) {
        let state = state_at(&world, pos[..world.n_agents].to_vec());
        let obs = observe(&state);
        for (n, o) in obs.iter().enumerate() {
            prop_assert_eq!(o.len(), world.obs_dim());
            let p = state.agent_positions[n];
            for (l, lm) in state.landmark_positions.iter().enumerate() {
                prop_assert!((p[0] + o[2 * l] - lm[0]).abs() < 1e-12);
                prop_assert!((p[1] + o[2 * l + 1] - lm[1]).abs() < 1e-12);
            }
            let base = 2 * world.n_landmarks;
            for (k, m) in (0..world.n_agents).filter(|&m| m != n).enumerate() {
                let q = state.agent_positions[m];
                prop_assert!((p[0] + o[base + 2 * k] - q[0]).abs() < 1e-12);
                prop_assert!((p[1] + o[base + 2 * k + 1] - q[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relative_positions_are_antisymmetric(pos in positions(2, 1.0)) {
        let world = WorldConfig::new(Scenario::SameLandmark, 2, RewardMode::Sparse);
        let obs = observe(&state_at(&world, pos));
        // With one landmark, the other agent sits at offset 2.
        prop_assert_eq!(obs[0][2], -obs[1][2]);
        prop_assert_eq!(obs[0][3], -obs[1][3]);
    }

    #[test]
    fn rewards_match_brute_force(world in world_strategy(), pos in positions(4, 1.0)) {
        let pos = pos[..world.n_agents].to_vec();
        let state = state_at(&world, pos.clone());
        let (r, ok) = sparse_reward(&world, &state);
        prop_assert_eq!(ok, brute_success(&world, &pos));
        prop_assert_eq!(r, if ok { 1.0 } else { 0.0 });
        let d = dense_reward(&world, &state);
        prop_assert!((d - brute_dense(&world, &pos)).abs() < 1e-12);
    }

    #[test]
    fn dense_reward_is_translation_invariant(
        pos in positions(2, 0.5),
        shift in prop::array::uniform2(-0.1..0.1f64),
    ) {
        let world = WorldConfig::new(Scenario::DifferentLandmark, 2, RewardMode::Dense);
        let base = dense_reward(&world, &state_at(&world, pos.clone()));
        let mut moved = state_at(&world, pos.iter().map(|p| [p[0] + shift[0], p[1] + shift[1]]).collect());
        for l in &mut moved.landmark_positions {
            l[0] += shift[0];
            l[1] += shift[1];
        }
        prop_assert!((dense_reward(&world, &moved) - base).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_trajectory(
        world in world_strategy(),
        seed in any::<u64>(),
        actions in prop::collection::vec(prop::collection::vec(action_strategy(), 4), 1..50),
    ) {
        let play = || {
            let (mut e, _) = NavEnv::new(world.clone(), &mut SeedStreams::new(seed).stream(1)).unwrap();
            actions
                .iter()
                .map(|j| {
                    let r = e.step(&j[..world.n_agents]).unwrap();
                    env::trajectory_line(e.state(), &j[..world.n_agents], &r)
                })
                .collect::<Vec<_>>()
        };
        prop_assert_eq!(play(), play());
    }
}
