use diffmpc::envs::{LtiEnv, LtiEnvConfig};
use diffmpc::models::lti::{self, LtiConfig};
use diffmpc::rl::{
    episode_seeds, q_update, q_update_bounded, rollout, td_error, train, ReplayBuffer, TrainConfig, Transition,
    UpdateMode,
};
use diffmpc::{Agent, SolverSettings};
use nalgebra::DVector;
use proptest::prelude::*;

fn agent() -> Agent {
    Agent::new(lti::ocp(&LtiConfig::default()).unwrap(), SolverSettings::default()).unwrap()
}

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn tr(i: usize) -> Transition {
    let x = i as f64;
    Transition {
        s: v(&[x, 0.0]),
        a: v(&[0.0]),
        s_next: v(&[x, 1.0]),
        cost: x,
    }
}

fn sample_transition() -> Transition {
    Transition {
        s: v(&[0.4, -0.2]),
        a: v(&[0.3]),
        s_next: v(&[0.35, -0.1]),
        cost: 0.8,
    }
}

#[test]
fn buffer_evicts_oldest_first() {
    let mut b = ReplayBuffer::new(3, 0).unwrap();
    for i in 0..5 {
        b.push(tr(i));
    }
    assert_eq!(b.len(), 3);
    let costs: Vec<f64> = b.iter().map(|t| t.cost).collect();
    assert_eq!(costs, [2.0, 3.0, 4.0]);
    assert_eq!(b.latest().unwrap().cost, 4.0);
    assert!(ReplayBuffer::new(0, 0).is_err());
}

proptest! {
    #[test]
    fn sampling_is_without_replacement(len in 1usize..40, n in 0usize..50, seed in any::<u64>()) {
        let mut b = ReplayBuffer::new(64, seed).unwrap();
        for i in 0..len {
            b.push(tr(i));
        }
        let s = b.sample(n);
        prop_assert_eq!(s.len(), n.min(len));
        let mut costs: Vec<u64> = s.iter().map(|t| t.cost as u64).collect();
        costs.sort_unstable();
        costs.dedup();
        prop_assert_eq!(costs.len(), n.min(len));

        let w = b.sample_with_latest(n.max(1));
        prop_assert_eq!(w[0].cost, (len - 1) as f64);
        let mut costs: Vec<u64> = w.iter().map(|t| t.cost as u64).collect();
        costs.sort_unstable();
        costs.dedup();
        prop_assert_eq!(costs.len(), w.len());
    }
}

#[test]
fn sampling_is_reproducible_from_the_seed() {
    let fill = |seed| {
        let mut b = ReplayBuffer::new(100, seed).unwrap();
        for i in 0..50 {
            b.push(tr(i));
        }
        b
    };
    let (mut a, mut b) = (fill(9), fill(9));
    for _ in 0..5 {
        assert_eq!(a.sample(7), b.sample(7));
    }
}

#[test]
fn zero_learning_rate_leaves_theta_bitwise_unchanged() {
    let mut ag = agent();
    let before = ag.theta().clone();
    let out = q_update(&mut ag, &[sample_transition()], 0.0, 0.9).unwrap();
    assert_eq!(out.used, 1);
    assert!(out.mean_abs_td > 0.0);
    assert_eq!(ag.theta(), &before);
}

#[test]
fn empty_batch_leaves_theta_unchanged() {
    let mut ag = agent();
    let before = ag.theta().clone();
    let out = q_update(&mut ag, &[], 1e-2, 0.9).unwrap();
    assert_eq!(out.used, 0);
    assert_eq!(ag.theta(), &before);
}

#[test]
fn zero_td_error_leaves_theta_unchanged() {
    let mut ag = agent();
    let mut t = sample_transition();
    let d = td_error(&mut ag, &t, 0.9).unwrap();
    // Shift the cost so that delta vanishes.
    t.cost -= d;
    let before = ag.theta().clone();
    let out = q_update(&mut ag, &[t], 1e-2, 0.9).unwrap();
    assert!(out.mean_abs_td < 1e-9);
    assert!((ag.theta() - before).amax() < 1e-9);
}

#[test]
fn duplicated_transition_gives_the_same_update_as_one() {
    let mut one = agent();
    let mut two = agent();
    let t = sample_transition();
    q_update(&mut one, std::slice::from_ref(&t), 1e-3, 0.9).unwrap();
    q_update(&mut two, &[t.clone(), t], 1e-3, 0.9).unwrap();
    assert!((one.theta() - two.theta()).amax() < 1e-10);
    assert_ne!(one.theta(), &agent().theta().clone());
}

#[test]
fn update_moves_theta_along_td_error_times_q_gradient() {
    let mut ag = agent();
    let t = sample_transition();
    let d = td_error(&mut ag, &t, 0.9).unwrap();
    let (_, sol) = ag.action_value(&t.s, &t.a).unwrap();
    let g = ag.grad_q(&sol).unwrap();
    let expect = ag.theta() + &g * (1e-3 * d);
    q_update(&mut ag, &[t], 1e-3, 0.9).unwrap();
    assert!((ag.theta() - expect).amax() < 1e-10);
}

#[test]
fn bounded_update_keeps_direction_and_caps_the_largest_entry() {
    let t = sample_transition();
    let mut free = agent();
    let mut capped = agent();
    let theta0 = free.theta().clone();
    q_update(&mut free, std::slice::from_ref(&t), 1e-2, 0.9).unwrap();
    let step = free.theta() - &theta0;
    let cap = step.amax() / 4.0;
    q_update_bounded(&mut capped, &[t], 1e-2, 0.9, cap).unwrap();
    let capped_step = capped.theta() - &theta0;
    assert!((capped_step.amax() - cap).abs() < 1e-15);
    assert!((capped_step * 4.0 - step).amax() < 1e-12);
}

#[test]
fn on_policy_td_error_uses_the_value_function() {
    let mut ag = agent();
    let s = v(&[0.3, 0.1]);
    let s_next = v(&[0.25, 0.05]);
    let (a, _) = ag.act(&s).unwrap();
    let (v_s, _) = ag.value(&s).unwrap();
    let (v_next, _) = ag.value(&s_next).unwrap();
    let t = Transition {
        s,
        a,
        s_next,
        cost: 0.4,
    };
    let d = td_error(&mut ag, &t, 0.9).unwrap();
    assert!((d - (0.4 + 0.9 * v_next - v_s)).abs() < 1e-7, "{d}");
}

fn short(episodes: usize) -> TrainConfig {
    TrainConfig {
        episodes,
        steps_per_episode: 5,
        ..Default::default()
    }
}

#[test]
fn zero_episodes_give_an_empty_history() {
    let mut env = LtiEnv::new(LtiEnvConfig::default(), 0);
    let mut ag = agent();
    let before = ag.theta().clone();
    let h = train(&mut env, &mut ag, &short(0)).unwrap();
    assert!(h.episodes.is_empty());
    assert_eq!(ag.theta(), &before);
}

#[test]
fn training_is_deterministic() {
    let run = |mode| {
        let mut env = LtiEnv::new(LtiEnvConfig::default(), 0);
        let mut ag = agent();
        let cfg = TrainConfig {
            update_mode: mode,
            batch_size: 3,
            exploration: 0.05,
            ..short(2)
        };
        (train(&mut env, &mut ag, &cfg).unwrap(), ag.theta().clone())
    };
    for mode in [UpdateMode::PerStep, UpdateMode::EpisodeBatch] {
        let (h1, t1) = run(mode);
        let (h2, t2) = run(mode);
        assert_eq!(h1, h2);
        assert_eq!(t1, t2);
        assert_eq!(h1.episodes.len(), 2);
        assert_eq!(h1.episodes[0].steps.len(), 5);
    }
}

#[test]
fn rollout_does_not_learn() {
    let mut env = LtiEnv::new(LtiEnvConfig::default(), 0);
    let mut ag = agent();
    let before = ag.theta().clone();
    let rec = rollout(&mut env, &mut ag, &short(3)).unwrap();
    assert_eq!(rec.steps.len(), 5);
    assert_eq!(ag.theta(), &before);
    assert!(rec.cost > 0.0);
}

#[test]
fn episode_seeds_are_reproducible_and_distinct() {
    let a = episode_seeds(4, 10);
    assert_eq!(a.len(), 11);
    assert_eq!(a, episode_seeds(4, 10));
    assert_ne!(a, episode_seeds(5, 10));
    let mut d = a.clone();
    d.sort_unstable();
    d.dedup();
    assert_eq!(d.len(), 11);
}

#[test]
fn invalid_training_configurations_are_rejected() {
    let mut env = LtiEnv::new(LtiEnvConfig::default(), 0);
    let bad = [
        TrainConfig { gamma: 1.5, ..short(1) },
        TrainConfig {
            batch_size: 0,
            ..short(1)
        },
        TrainConfig {
            initial_state: vec![0.0],
            ..short(1)
        },
        TrainConfig {
            max_step: 0.0,
            ..short(1)
        },
    ];
    for cfg in bad {
        assert!(train(&mut env, &mut agent(), &cfg).is_err(), "{cfg:?}");
    }
}

#[test]
fn td_error_vanishes_when_the_model_is_exact() {
    // Undiscounted, with the LQR terminal weight: away from the bounds the
    // MPC value is the infinite-horizon value, so the Bellman equation holds
    // along the closed loop.
    let model = LtiConfig {
        gamma: 1.0,
        ..Default::default()
    };
    let plant = LtiEnvConfig {
        a: model.a,
        b: model.b,
        disturbance: (0.0, 0.0),
        ..Default::default()
    };
    let settings = SolverSettings {
        kkt_tol: 1e-10,
        tau_min: 1e-10,
        ..Default::default()
    };
    let mut ag = Agent::new(lti::ocp(&model).unwrap(), settings).unwrap();
    let before = ag.theta().clone();
    let mut env = LtiEnv::new(plant, 0);
    let cfg = TrainConfig {
        episodes: 1,
        steps_per_episode: 30,
        learning_rate: 0.0,
        gamma: 1.0,
        initial_state: vec![0.5, 0.0],
        ..Default::default()
    };
    let h = train(&mut env, &mut ag, &cfg).unwrap();
    let ep = &h.episodes[0];
    assert_eq!(ep.violations, 0);
    assert_eq!(ep.failures, 0);
    assert!(ep.mean_abs_td <= 1e-6, "mean |td| {:e}", ep.mean_abs_td);
    assert_eq!(ag.theta(), &before);
}
