use std::sync::Arc;

use super::*;
use crate::plant::builtin_model;

fn arm() -> Arc<Model> {
    Arc::new(builtin_model("arm2x6").unwrap())
}

fn small_box() -> TaskConfig {
    TaskConfig {
        target_low: Some([0.45, 0.1]),
        target_high: Some([0.55, 0.2]),
        ..TaskConfig::default()
    }
}

#[test]
fn position_reward_examples() {
    assert_eq!(position_reward(0.0), 1.0);
    assert!((position_reward(0.01) - (-1.0f64).exp()).abs() < 1e-15);
    assert!((position_reward(0.04) - (-2.0f64).exp()).abs() < 1e-15);
}

#[test]
fn activation_cost_at_full_activation() {
    // |1_N| / N = sqrt(N) / N
    let c = activation_cost(&[1.0; 6]);
    assert!((c - 6f64.sqrt() / 6.0).abs() < 1e-15);
    assert_eq!(activation_cost(&[0.0; 4]), 0.0);
}

#[test]
fn full_activation_at_target_reward() {
    let mut env = reach_env(arm(), small_box()).unwrap();
    let mut s = env.state().clone();
    for m in &mut s.muscles {
        m.act = 1.0;
    }
    env.set_state(s).unwrap();
    let tip = end_effector_position(env.model(), &env.state().q).unwrap();
    if let Goal::Reach { target, .. } = &mut env.goal {
        *target = tip;
    }
    let cfg = env.config().clone();
    let want = cfg.w_p - cfg.w_a * 6f64.sqrt() / 6.0;
    assert!((env.reward() - want).abs() < 1e-12);
}

#[test]
fn obs_dim_formula() {
    let model = arm();
    let reach = reach_env(model.clone(), small_box()).unwrap();
    assert_eq!(reach.obs_dim(), 1 + 2 * 2 + 4 * 6 + 6);
    assert_eq!(reach.observation().len(), reach.obs_dim());
    let osc = oscillate_env(model, TaskConfig { kind: TaskKind::Oscillate, ..TaskConfig::default() }).unwrap();
    assert_eq!(osc.obs_dim(), 1 + 2 * 2 + 4 * 6 + 3);
    assert_eq!(osc.observation().len(), osc.obs_dim());
    assert_eq!(osc.action_dim(), 6);
}

#[test]
fn reset_is_deterministic_per_seed() {
    let mut env = reach_env(arm(), TaskConfig::default()).unwrap();
    let a = env.reset(7).unwrap();
    env.step(&[0.3; 6]).unwrap();
    let b = env.reset(7).unwrap();
    assert_eq!(a, b);
    let c = env.reset(8).unwrap();
    assert_ne!(a, c);
}

#[test]
fn targets_stay_in_box() {
    let mut env = reach_env(arm(), small_box()).unwrap();
    for seed in 0..50 {
        env.reset(seed).unwrap();
        let t = env.target().unwrap();
        assert!((0.45..=0.55).contains(&t[0]) && (0.1..=0.2).contains(&t[1]));
    }
}

#[test]
fn unreachable_bounds_rejected() {
    let cfg = TaskConfig {
        target_low: Some([0.0, 0.0]),
        target_high: Some([2.0, 2.0]),
        ..TaskConfig::default()
    };
    assert!(matches!(reach_env(arm(), cfg), Err(Error::Param(_))));
    let bad_joint = TaskConfig { kind: TaskKind::Oscillate, joint: 5, ..TaskConfig::default() };
    assert!(oscillate_env(arm(), bad_joint).is_err());
}

#[test]
fn truncates_at_episode_length() {
    let cfg = TaskConfig { episode_length: 5, ..small_box() };
    let mut env = reach_env(arm(), cfg).unwrap();
    env.reset(0).unwrap();
    for k in 1..=5 {
        let s = env.step(&[0.1; 6]).unwrap();
        assert!(!s.terminated);
        assert_eq!(s.truncated, k == 5);
    }
}

#[test]
fn rewards_bounded() {
    for kind in [TaskKind::Reach, TaskKind::Oscillate] {
        let cfg = TaskConfig { kind, alive: 0.1, ..TaskConfig::default() };
        let bound = cfg.reward_bound();
        let mut env = make_env(arm(), &cfg).unwrap();
        env.reset(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let ctrl: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
            let s = env.step(&ctrl).unwrap();
            assert!(s.reward.abs() <= bound);
        }
    }
}

#[test]
fn oscillate_reward_at_reference() {
    let cfg = TaskConfig { kind: TaskKind::Oscillate, w_a: 0.0, ..TaskConfig::default() };
    let mut env = oscillate_env(arm(), cfg).unwrap();
    let mut s = env.model().state_at(&[0.5, 0.0]).unwrap();
    s.t = 0.0;
    env.set_state(s).unwrap();
    // reference at t = 0 equals the amplitude
    assert!((env.reward() - 1.0).abs() < 1e-12);
    assert!((tracking_reward(0.0, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
    assert!((tracking_reward(0.3, 0.1) - (-0.04f64).exp()).abs() < 1e-15);
}

#[test]
fn resting_joint_misses_reference() {
    let cfg = TaskConfig { kind: TaskKind::Oscillate, w_a: 0.0, period: 0.4, ..TaskConfig::default() };
    let mut env = oscillate_env(arm(), cfg).unwrap();
    env.set_state(env.model().state_at(&[0.0, 0.0]).unwrap()).unwrap();
    for k in 0..40 {
        let mut s = env.state().clone();
        s.t = k as f64 * DT;
        env.set_state(s).unwrap();
        let r = env.reward();
        // zero crossings of cos at t = 0.1 and 0.3 (mod 0.4)
        let crossing = (k % 20) == 10 || k % 40 == 30;
        assert!(r <= 1.0);
        if !crossing {
            assert!(r < 1.0 - 1e-6, "k = {k}");
        }
    }
}

#[test]
fn replay_is_deterministic() {
    let run = || {
        let mut env = reach_env(arm(), small_box()).unwrap();
        env.reset(11).unwrap();
        let mut trace = Trace::default();
        for k in 0..30 {
            let ctrl: Vec<f64> = (0..6).map(|i| ((k + i) % 3) as f64 / 2.0).collect();
            let s = env.step(&ctrl).unwrap();
            let (t, q) = env.posture();
            trace.push(t, q, &ctrl, s.reward);
        }
        trace
    };
    assert_eq!(run(), run());
}

#[test]
fn trace_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    let mut env = reach_env(arm(), small_box()).unwrap();
    let mut trace = Trace::default();
    for _ in 0..3 {
        let s = env.step(&[0.5; 6]).unwrap();
        let (t, q) = env.posture();
        trace.push(t, q, &[0.5; 6], s.reward);
    }
    trace.write_csv(&path).unwrap();
    let mut r = csv::Reader::from_path(&path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header.len(), 1 + 2 + 6 + 1);
    assert_eq!(header[0], "t");
    assert_eq!(header[9], "reward");
    let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2][9].parse::<f64>().unwrap(), trace.reward[2]);
}
