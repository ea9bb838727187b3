use std::f64::consts::PI;

use super::*;
use crate::synergy::GroupingResult;

fn transition(i: usize) -> Transition {
    Transition {
        obs: vec![i as f64],
        action: vec![0.0],
        reward: i as f64,
        next_obs: vec![i as f64 + 1.0],
        done: false,
        t: i as u64,
    }
}

#[test]
fn replay_is_fifo() {
    let mut buf = ReplayBuffer::new(5).unwrap();
    for i in 0..8 {
        buf.push(transition(i));
    }
    assert_eq!(buf.len(), 5);
    let kept: Vec<f64> = buf.iter().map(|t| t.reward).collect();
    assert_eq!(kept, vec![3.0, 4.0, 5.0, 6.0, 7.0]);
    assert!(ReplayBuffer::new(0).is_err());
}

#[test]
fn replay_sampling_is_uniform() {
    let n = 100;
    let mut buf = ReplayBuffer::new(n).unwrap();
    for i in 0..n {
        buf.push(transition(i));
    }
    let draws = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut hist = vec![0usize; n];
    for i in buf.sample_indices(draws, &mut rng) {
        hist[i] += 1;
    }
    let expected = draws as f64 / n as f64;
    let chi2: f64 = hist.iter().map(|&h| (h as f64 - expected).powi(2) / expected).sum();
    // Wilson-Hilferty upper 0.001 quantile of chi-square with n - 1 dof
    let df = (n - 1) as f64;
    let z = 3.090_232;
    let crit = df * (1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt()).powi(3);
    assert!(chi2 < crit, "chi2 {chi2} vs {crit}");
}

fn zero_agent(kind: ActorKind, map: GroupIndexMap, n_obs: usize) -> Agent {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut a = Agent::new(kind, n_obs, &[3], map, ClipSchedule::default(), 1.0, &mut rng).unwrap();
    a.actor.net.params.iter_mut().for_each(|p| *p = 0.0);
    a
}

/// Zero weights, output bias `b`.
fn constant_critic(net: &mut Mlp, b: f64) {
    net.params.iter_mut().for_each(|p| *p = 0.0);
    *net.params.last_mut().unwrap() = b;
}

fn one_batch(reward: f64, done: bool, n_obs: usize, n_stored: usize) -> Batch {
    let t = Transition {
        obs: vec![0.3; n_obs],
        action: vec![0.1; n_stored],
        reward,
        next_obs: vec![-0.2; n_obs],
        done,
        t: 0,
    };
    Batch::from_transitions(&[&t])
}

#[test]
fn critic_target_hand_arithmetic() {
    let mut agent = zero_agent(ActorKind::Flat, GroupIndexMap::identity(2), 3);
    constant_critic(&mut agent.targets[0], 1.5);
    constant_critic(&mut agent.targets[1], 0.5);
    // zero net and zero noise: u = 0, log pi = 2 (-0.5 ln 2 pi)
    let log_pi = -(2.0 * PI).ln();
    let batch = one_batch(0.7, false, 3, 2);
    let eps = DMatrix::zeros(2, 1);
    let y = agent.critic_target(&batch, eps.clone(), 0.2, 0.9).unwrap();
    let want = 0.7 + 0.9 * (0.5 - 0.2 * log_pi);
    assert!((y[0] - want).abs() < 1e-12);

    let done = one_batch(0.7, true, 3, 2);
    assert_eq!(agent.critic_target(&done, eps.clone(), 0.2, 0.9).unwrap(), vec![0.7]);
    assert_eq!(agent.critic_target(&batch, eps, 0.2, 0.0).unwrap(), vec![0.7]);
}

#[test]
fn targets_start_equal_to_critics() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = Agent::new(ActorKind::Flat, 4, &[8], GroupIndexMap::identity(3), ClipSchedule::default(), 1.0, &mut rng).unwrap();
    assert_eq!(a.targets, a.critics);
    assert_ne!(a.critics[0], a.critics[1]);
    assert_eq!(a.target_entropy, -3.0);
}

fn dynsyn_map() -> GroupIndexMap {
    GroupIndexMap::new(&GroupingResult::new(vec![vec![0, 2], vec![1, 3, 4]], vec![0, 1], 0.0, 0).unwrap())
}

fn random_agent(seed: u64) -> Agent {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sched = ClipSchedule { k_d: 1e-3, a_d: 0.0, kappa: 1.0 };
    let mut a = Agent::new(ActorKind::DynSyn, 3, &[6], dynsyn_map(), sched, 1.0, &mut rng).unwrap();
    a.step = 400;
    a.actor.log_std_w = vec![-0.5, 0.3, 0.1];
    a
}

#[test]
fn flat_critics_give_no_actor_gradient_without_entropy() {
    let mut agent = random_agent(2);
    constant_critic(&mut agent.critics[0], 2.0);
    constant_critic(&mut agent.critics[1], 3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let obs = standard_normal(3, 5, &mut rng);
    let eps = standard_normal(5, 5, &mut rng);
    let (loss, grads, _) = agent.actor_loss(&obs, eps, 0.0).unwrap();
    assert_eq!(loss, -2.0);
    assert!(grads.iter().all(|g| g.abs() < 1e-15));
}

#[test]
fn actor_loss_is_linear_in_alpha() {
    let agent = random_agent(4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let obs = standard_normal(3, 6, &mut rng);
    let eps = standard_normal(5, 6, &mut rng);
    let l = |alpha| agent.actor_loss(&obs, eps.clone(), alpha).unwrap().0;
    let (l0, l1, l2) = (l(0.0), l(1.0), l(2.0));
    assert!(((l2 - l1) - (l1 - l0)).abs() < 1e-12);
    let mean_logp = agent.actor_loss(&obs, eps.clone(), 0.0).unwrap().2.iter().sum::<f64>() / 6.0;
    assert!((l1 - l0 - mean_logp).abs() < 1e-12);
}

#[test]
fn actor_gradient_matches_finite_differences() {
    let agent = random_agent(6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let obs = standard_normal(3, 4, &mut rng);
    let eps = standard_normal(5, 4, &mut rng);
    let alpha = 0.3;
    let (_, grads, _) = agent.actor_loss(&obs, eps.clone(), alpha).unwrap();
    let p0 = agent.actor.params();
    let h = 1e-6;
    let mut checked = 0;
    for i in 0..p0.len() {
        let eval = |d: f64| {
            let mut a = agent.clone();
            let mut p = p0.clone();
            p[i] += d;
            a.actor.set_params(&p);
            a.actor_loss(&obs, eps.clone(), alpha).unwrap().0
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        if fd.abs() > 1e-6 {
            checked += 1;
        }
        assert!((grads[i] - fd).abs() <= 1e-3 * fd.abs().max(1e-4), "param {i}: {} vs {fd}", grads[i]);
    }
    assert!(checked > p0.len() / 2);
}

#[test]
fn alpha_update_examples() {
    let mut agent = zero_agent(ActorKind::Flat, GroupIndexMap::identity(2), 1);
    // entropy at target: log pi = -target_entropy
    assert_eq!(agent.alpha_gradient(&[2.0, 2.0]), 0.0);
    agent.alpha_update(&[2.0, 2.0], 0.1).unwrap();
    assert_eq!(agent.log_alpha, 0.0);

    // entropy below target: log pi above -target, alpha grows
    let mut a = zero_agent(ActorKind::Flat, GroupIndexMap::identity(2), 1);
    let g = a.alpha_gradient(&[3.0, 4.0]);
    assert_eq!(g, -1.5);
    a.alpha_update(&[3.0, 4.0], 0.01).unwrap();
    // first Adam step: -lr g / (|g| + eps)
    assert!((a.log_alpha - 0.01 * 1.5 / (1.5 + 1e-8)).abs() < 1e-15);
    assert!(a.alpha() > 1.0);
}

#[test]
fn polyak_targets_stay_in_parameter_hull() {
    let mut agent = random_agent(8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let items: Vec<Transition> = (0..32)
        .map(|_| Transition {
            obs: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
            action: (0..5).map(|_| rng.random_range(-1.0..1.0)).collect(),
            reward: rng.random_range(-1.0..1.0),
            next_obs: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
            done: rng.random_bool(0.2),
            t: 0,
        })
        .collect();
    let refs: Vec<&Transition> = items.iter().collect();
    let batch = Batch::from_transitions(&refs);
    let cfg = SacConfig { tau: 0.1, ..SacConfig::default() };
    let mut lo = [agent.critics[0].params.clone(), agent.critics[1].params.clone()];
    let mut hi = lo.clone();
    for _ in 0..30 {
        agent.update(&batch, &cfg, 1e-2, &mut rng).unwrap();
        for k in 0..2 {
            for (i, &p) in agent.critics[k].params.iter().enumerate() {
                lo[k][i] = lo[k][i].min(p);
                hi[k][i] = hi[k][i].max(p);
            }
            for (i, &p) in agent.targets[k].params.iter().enumerate() {
                assert!(p >= lo[k][i] - 1e-12 && p <= hi[k][i] + 1e-12);
            }
        }
    }
    assert_ne!(agent.targets[0], agent.critics[0]);
}

#[test]
fn checkpoint_round_trip() {
    let mut agent = random_agent(10);
    agent.log_alpha = -0.7;
    agent.updates = 12;
    agent.actor_opt.t = 12;
    let c = agent.to_checkpoint(serde_json::json!({"grouping_hash": "abc"}));
    let back = Agent::from_checkpoint(&Checkpoint::from_bytes(&c.to_bytes()).unwrap()).unwrap();
    assert_eq!(back, agent);
    assert_eq!(c.meta["extra"]["grouping_hash"], "abc");
}

/// One-step bandit: reward `1 - 4 (ctrl - 0.8)^2`, best at excitation 0.8.
struct Bandit;

impl Environment for Bandit {
    fn obs_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
        Ok(vec![1.0])
    }

    fn step(&mut self, ctrl: &[f64]) -> Result<crate::tasks::Step> {
        Ok(crate::tasks::Step {
            obs: vec![1.0],
            reward: 1.0 - 4.0 * (ctrl[0] - 0.8).powi(2),
            terminated: true,
            truncated: false,
        })
    }
}

fn bandit_setup(total: u64) -> TrainSetup {
    TrainSetup {
        kind: ActorKind::Flat,
        map: GroupIndexMap::identity(1),
        sched: ClipSchedule::default(),
        config: SacConfig {
            batch_size: 64,
            n_envs: 1,
            hidden: vec![16, 16],
            learning_rate: 3e-3,
            lr_decay: LrDecay::Constant,
            total_steps: total,
            eval_interval: 500,
            eval_episodes: 1,
            ..SacConfig::default()
        },
        seed: 3,
        grouping_hash: None,
        checkpoint_dir: None,
        stop_at_return: None,
    }
}

#[test]
fn flat_sac_solves_bandit() {
    let out = train(|| Ok(Bandit), &bandit_setup(5_000), None).unwrap();
    let last = out.curve.last().unwrap();
    assert_eq!(last.step, 5_000);
    assert!(last.mean_return > 0.99, "{:?}", out.curve);
}

#[test]
fn zero_steps_gives_empty_curve_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut setup = bandit_setup(0);
    setup.checkpoint_dir = Some(dir.path().to_path_buf());
    setup.grouping_hash = Some("feed".into());
    let out = train(|| Ok(Bandit), &setup, None).unwrap();
    assert!(out.curve.is_empty());
    let c = Checkpoint::load(&dir.path().join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(c.meta["extra"]["grouping_hash"], "feed");
    assert_eq!(Agent::from_checkpoint(&c).unwrap(), out.agent);
}

#[test]
fn no_updates_during_warmup() {
    let out = train(|| Ok(Bandit), &bandit_setup(99), None).unwrap();
    assert_eq!(out.agent.updates, 0);
    let out = train(|| Ok(Bandit), &bandit_setup(101), None).unwrap();
    assert_eq!(out.agent.updates, 2 * 4);
}

#[test]
fn training_is_deterministic() {
    let a = train(|| Ok(Bandit), &bandit_setup(1_500), None).unwrap();
    let b = train(|| Ok(Bandit), &bandit_setup(1_500), None).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.agent, b.agent);
}

#[test]
fn resume_continues_the_step_counter() {
    let first = train(|| Ok(Bandit), &bandit_setup(1_000), None).unwrap();
    let out = train(|| Ok(Bandit), &bandit_setup(2_000), Some(first.agent.clone())).unwrap();
    assert_eq!(out.agent.step, 2_000);
    assert!(out.agent.updates > first.agent.updates);
    assert_eq!(out.curve.iter().map(|r| r.step).collect::<Vec<_>>(), vec![1_500, 2_000]);
}
