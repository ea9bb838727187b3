//! Soft actor-critic with twin critics, polyak-averaged targets and automatic
//! entropy tuning. Entropy is measured on the actor's `e` head only, so for
//! the grouped actor the target entropy is minus the number of groups.
//!
//! Critics score the composed muscle action in `[-1, 1]`; the map to
//! excitations happens at the environment boundary.

mod replay;

pub use replay::{Batch, ReplayBuffer, Transition};

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{Adam, LrSchedule, Mlp};
use crate::policy::{to_excitations, Actor, ActorKind, ClipSchedule, GroupIndexMap};
use crate::tasks::{Environment, Trace};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrDecay {
    #[default]
    Linear,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacConfig {
    pub batch_size: usize,
    pub buffer_size: usize,
    /// Environment steps with uniform random actions and no updates.
    pub warmup_steps: u64,
    pub gamma: f64,
    /// Polyak coefficient for the target critics.
    pub tau: f64,
    /// Vector steps between update rounds.
    pub train_frequency: u64,
    /// Updates per round.
    pub gradient_steps: u64,
    /// Updates between target refreshes.
    pub target_update_interval: u64,
    pub n_envs: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub lr_decay: LrDecay,
    pub initial_alpha: f64,
    /// Environment steps to train for.
    pub total_steps: u64,
    /// Environment steps between evaluations.
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Environment steps between checkpoints; 0 writes one at the end only.
    pub checkpoint_interval: u64,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            batch_size: 256,
            buffer_size: 1_000_000,
            warmup_steps: 100,
            gamma: 0.98,
            tau: 0.005,
            train_frequency: 1,
            gradient_steps: 4,
            target_update_interval: 1,
            n_envs: 8,
            hidden: vec![256, 256],
            learning_rate: 1e-3,
            lr_decay: LrDecay::Linear,
            initial_alpha: 1.0,
            total_steps: 300_000,
            eval_interval: 5_000,
            eval_episodes: 5,
            checkpoint_interval: 0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("batch_size", self.batch_size as u64),
            ("buffer_size", self.buffer_size as u64),
            ("train_frequency", self.train_frequency),
            ("gradient_steps", self.gradient_steps),
            ("target_update_interval", self.target_update_interval),
            ("n_envs", self.n_envs as u64),
            ("eval_interval", self.eval_interval),
            ("eval_episodes", self.eval_episodes as u64),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::param(format!("{name} must be >= 1")));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::param("gamma must lie in [0, 1)"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::param("tau must lie in (0, 1]"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::param("learning_rate must be > 0"));
        }
        if !(self.initial_alpha.is_finite() && self.initial_alpha > 0.0) {
            return Err(Error::param("initial_alpha must be > 0"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::param("hidden layers must be non-empty and >= 1 wide"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        match self.lr_decay {
            LrDecay::Linear => LrSchedule::Linear {
                initial: self.learning_rate,
                total_steps: self.total_steps,
            },
            LrDecay::Constant => LrSchedule::Constant { lr: self.learning_rate },
        }
    }
}

/// Stacks two batches vertically.
fn stack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Networks, optimizers and counters of one learner.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub actor: Actor,
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    pub log_alpha: f64,
    pub target_entropy: f64,
    pub actor_opt: Adam,
    pub critic_opts: [Adam; 2],
    pub alpha_opt: Adam,
    /// Environment steps collected so far.
    pub step: u64,
    /// Gradient updates applied so far.
    pub updates: u64,
}

/// Scalars reported by one update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        kind: ActorKind,
        n_obs: usize,
        hidden: &[usize],
        map: GroupIndexMap,
        sched: ClipSchedule,
        initial_alpha: f64,
        rng: &mut R,
    ) -> Result<Agent> {
        let actor = Actor::new(kind, n_obs, hidden, map, sched, rng)?;
        let mut sizes = vec![n_obs + actor.n_muscles()];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let critics = [Mlp::new(&sizes, rng)?, Mlp::new(&sizes, rng)?];
        let n_critic = critics[0].n_params();
        Ok(Agent {
            target_entropy: -(actor.n_e() as f64),
            actor_opt: Adam::new(actor.n_params()),
            critic_opts: [Adam::new(n_critic), Adam::new(n_critic)],
            alpha_opt: Adam::new(1),
            targets: critics.clone(),
            critics,
            actor,
            log_alpha: initial_alpha.ln(),
            step: 0,
            updates: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// Current clip bound of the correction weights.
    pub fn clip_bound(&self) -> f64 {
        self.actor.sched.bound(self.step)
    }

    fn q_values(nets: &[Mlp; 2], x: &DMatrix<f64>) -> Result<[DMatrix<f64>; 2]> {
        Ok([nets[0].predict(x)?, nets[1].predict(x)?])
    }

    /// `r + gamma (1 - done) (min Q'(s', a') - alpha log pi(a'|s'))` with `a'`
    /// drawn from `next_eps`.
    pub fn critic_target(&self, batch: &Batch, next_eps: DMatrix<f64>, alpha: f64, gamma: f64) -> Result<Vec<f64>> {
        let next = self.actor.sample_with_noise(&batch.next_obs, next_eps)?;
        let a = self.actor.compose_batch(&next.action, self.step);
        let q = Self::q_values(&self.targets, &stack(&batch.next_obs, &a))?;
        Ok((0..batch.len())
            .map(|b| {
                let soft = q[0][(0, b)].min(q[1][(0, b)]) - alpha * next.log_prob[b];
                let cont = if batch.done[b] { 0.0 } else { 1.0 };
                batch.reward[b] + gamma * cont * soft
            })
            .collect())
    }

    /// Half mean squared error of each critic against `target`, with gradients.
    pub fn critic_loss(&self, batch: &Batch, target: &[f64]) -> Result<([f64; 2], [Vec<f64>; 2])> {
        let a = self.actor.compose_batch(&batch.action, self.step);
        let x = stack(&batch.obs, &a);
        let n = batch.len() as f64;
        let mut losses = [0.0; 2];
        let mut grads = [Vec::new(), Vec::new()];
        for k in 0..2 {
            let (q, cache) = self.critics[k].forward_batch(&x)?;
            let diff = DMatrix::from_fn(1, batch.len(), |_, b| q[(0, b)] - target[b]);
            losses[k] = 0.5 * diff.iter().map(|d| d * d).sum::<f64>() / n;
            grads[k] = self.critics[k].backward(&cache, &(diff / n)).0;
        }
        Ok((losses, grads))
    }

    /// `mean(alpha log pi(a|s) - min Q(s, compose(a)))` for reparameterized
    /// samples with noise `eps`, its actor gradient and the log-probabilities.
    pub fn actor_loss(&self, obs: &DMatrix<f64>, eps: DMatrix<f64>, alpha: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let s = self.actor.sample_with_noise(obs, eps)?;
        let t = self.step;
        let a = self.actor.compose_batch(&s.action, t);
        let x = stack(obs, &a);
        let (q1, c1) = self.critics[0].forward_batch(&x)?;
        let (q2, c2) = self.critics[1].forward_batch(&x)?;
        let batch = obs.ncols();
        let n = batch as f64;
        let mut dq1 = DMatrix::zeros(1, batch);
        let mut dq2 = DMatrix::zeros(1, batch);
        let mut loss = 0.0;
        for b in 0..batch {
            let q = if q1[(0, b)] <= q2[(0, b)] {
                dq1[(0, b)] = -1.0 / n;
                q1[(0, b)]
            } else {
                dq2[(0, b)] = -1.0 / n;
                q2[(0, b)]
            };
            loss += (alpha * s.log_prob[b] - q) / n;
        }
        let dx = self.critics[0].backward(&c1, &dq1).1 + self.critics[1].backward(&c2, &dq2).1;
        let d_a = dx.rows(obs.nrows(), a.nrows()).into_owned();
        let d_stored = self.actor.compose_backward_batch(&s.action, &d_a, t);
        let grads = self.actor.backward(&s, &d_stored, &vec![alpha / n; batch]);
        Ok((loss, grads, s.log_prob))
    }

    /// Gradient of `-mean(log_alpha (log pi + target_entropy))` in `log_alpha`.
    pub fn alpha_gradient(&self, log_prob: &[f64]) -> f64 {
        -log_prob.iter().map(|lp| lp + self.target_entropy).sum::<f64>() / log_prob.len() as f64
    }

    pub fn alpha_update(&mut self, log_prob: &[f64], lr: f64) -> Result<f64> {
        let g = self.alpha_gradient(log_prob);
        let mut p = [self.log_alpha];
        self.alpha_opt.step(&mut p, &[g], lr)?;
        self.log_alpha = p[0];
        Ok(self.alpha())
    }

    /// One round of critic, actor, temperature and target updates.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch, config: &SacConfig, lr: f64, rng: &mut R) -> Result<UpdateStats> {
        let n_s = self.actor.n_stored();
        let alpha = self.alpha();
        let target = self.critic_target(batch, standard_normal(n_s, batch.len(), rng), alpha, config.gamma)?;
        let (closs, cgrads) = self.critic_loss(batch, &target)?;
        for k in 0..2 {
            self.critic_opts[k].step(&mut self.critics[k].params, &cgrads[k], lr)?;
        }
        let (aloss, agrads, log_prob) = self.actor_loss(&batch.obs, standard_normal(n_s, batch.len(), rng), alpha)?;
        let mut p = self.actor.params();
        self.actor_opt.step(&mut p, &agrads, lr)?;
        self.actor.set_params(&p);
        self.alpha_update(&log_prob, lr)?;
        self.updates += 1;
        if self.updates % config.target_update_interval == 0 {
            for k in 0..2 {
                self.targets[k].soft_update(&self.critics[k], config.tau);
            }
        }
        Ok(UpdateStats {
            critic_loss: 0.5 * (closs[0] + closs[1]),
            actor_loss: aloss,
            alpha,
        })
    }

    /// Stored action `[a_e; w]` for one observation.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> Result<Vec<f64>> {
        let x = DMatrix::from_column_slice(obs.len(), 1, obs);
        let a = if deterministic {
            self.actor.deterministic(&x)?
        } else {
            self.actor.sample(&x, rng)?.action
        };
        Ok(a.iter().copied().collect())
    }

    /// Excitations sent to the environment for a stored action.
    pub fn excitations(&self, stored: &[f64]) -> Vec<f64> {
        to_excitations(&self.actor.compose(stored, self.step))
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        let meta = serde_json::json!({
            "kind": "policy",
            "actor": self.actor.kind,
            "hidden": &self.actor.net.sizes()[1..self.actor.net.sizes().len() - 1],
            "n_obs": self.actor.n_obs(),
            "map": self.actor.map,
            "sched": self.actor.sched,
            "log_alpha": self.log_alpha,
            "target_entropy": self.target_entropy,
            "step": self.step,
            "updates": self.updates,
            "adam_t": [self.actor_opt.t, self.critic_opts[0].t, self.critic_opts[1].t, self.alpha_opt.t],
            "extra": extra,
        });
        let mut c = Checkpoint::new(meta);
        c.push_vec("actor", &self.actor.params());
        for k in 0..2 {
            c.push_vec(format!("critic{k}"), &self.critics[k].params);
            c.push_vec(format!("target{k}"), &self.targets[k].params);
            c.push_vec(format!("critic{k}.m"), &self.critic_opts[k].m);
            c.push_vec(format!("critic{k}.v"), &self.critic_opts[k].v);
        }
        c.push_vec("actor.m", &self.actor_opt.m);
        c.push_vec("actor.v", &self.actor_opt.v);
        c.push_vec("alpha.mv", &[self.alpha_opt.m[0], self.alpha_opt.v[0]]);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Agent> {
        let bad = |what: &str| Error::format("checkpoint", format!("bad or missing `{what}`"));
        let field = |name: &str| c.meta.get(name).cloned().ok_or_else(|| bad(name));
        let parse = |name: &str| -> Result<serde_json::Value> { field(name) };
        if c.meta.get("kind").and_then(|v| v.as_str()) != Some("policy") {
            return Err(bad("kind"));
        }
        let kind: ActorKind = serde_json::from_value(parse("actor")?).map_err(|_| bad("actor"))?;
        let hidden: Vec<usize> = serde_json::from_value(parse("hidden")?).map_err(|_| bad("hidden"))?;
        let n_obs: usize = serde_json::from_value(parse("n_obs")?).map_err(|_| bad("n_obs"))?;
        let map: GroupIndexMap = serde_json::from_value(parse("map")?).map_err(|_| bad("map"))?;
        let sched: ClipSchedule = serde_json::from_value(parse("sched")?).map_err(|_| bad("sched"))?;
        let adam_t: [u64; 4] = serde_json::from_value(parse("adam_t")?).map_err(|_| bad("adam_t"))?;
        let num = |name: &str| field(name).ok().and_then(|v| v.as_f64()).ok_or_else(|| bad(name));
        let int = |name: &str| field(name).ok().and_then(|v| v.as_u64()).ok_or_else(|| bad(name));

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut agent = Agent::new(kind, n_obs, &hidden, map, sched, 1.0, &mut rng)?;
        let load = |name: &str, n: usize| -> Result<Vec<f64>> {
            let t = c.get(name)?;
            if t.data.len() != n {
                return Err(bad(name));
            }
            Ok(t.data.clone())
        };
        let p = load("actor", agent.actor.n_params())?;
        agent.actor.set_params(&p);
        agent.actor_opt.m = load("actor.m", p.len())?;
        agent.actor_opt.v = load("actor.v", p.len())?;
        agent.actor_opt.t = adam_t[0];
        let n_c = agent.critics[0].n_params();
        for k in 0..2 {
            agent.critics[k].params = load(&format!("critic{k}"), n_c)?;
            agent.targets[k].params = load(&format!("target{k}"), n_c)?;
            agent.critic_opts[k].m = load(&format!("critic{k}.m"), n_c)?;
            agent.critic_opts[k].v = load(&format!("critic{k}.v"), n_c)?;
            agent.critic_opts[k].t = adam_t[1 + k];
        }
        let mv = load("alpha.mv", 2)?;
        agent.alpha_opt.m = vec![mv[0]];
        agent.alpha_opt.v = vec![mv[1]];
        agent.alpha_opt.t = adam_t[3];
        agent.log_alpha = num("log_alpha")?;
        agent.target_entropy = num("target_entropy")?;
        agent.step = int("step")?;
        agent.updates = int("updates")?;
        Ok(agent)
    }
}

/// One evaluation point of a learning curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: u64,
    pub mean_return: f64,
    pub std_return: f64,
    pub alpha: f64,
    /// Clip bound at this step.
    pub c: f64,
}

pub fn write_curve(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::format("curve csv", e);
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_curve(path: &Path) -> Result<Vec<CurveRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format("curve csv", e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<CurveRow>, _>>()
        .map_err(|e| Error::format("curve csv", e))
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Evaluation episodes start from these reset seeds so every evaluation
/// sees the same targets.
pub const EVAL_SEED_BASE: u64 = 1 << 40;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Evaluation {
    pub returns: Vec<f64>,
    pub traces: Vec<Trace>,
}

/// Runs deterministic-policy episodes from reset seeds `seed_base + k`.
pub fn evaluate<E: Environment>(agent: &Agent, env: &mut E, episodes: usize, seed_base: u64, traces: bool) -> Result<Evaluation> {
    if episodes == 0 {
        return Err(Error::param("episodes must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut out = Evaluation::default();
    for k in 0..episodes {
        let mut obs = env.reset(seed_base + k as u64)?;
        let mut trace = Trace::default();
        let mut ret = 0.0;
        loop {
            let stored = agent.act(&obs, true, &mut rng)?;
            let ctrl = agent.excitations(&stored);
            let s = env.step(&ctrl)?;
            ret += s.reward;
            if traces {
                let (t, q) = env.posture();
                trace.push(t, q, &ctrl, s.reward);
            }
            if s.done() {
                break;
            }
            obs = s.obs;
        }
        out.returns.push(ret);
        if traces {
            out.traces.push(trace);
        }
    }
    Ok(out)
}

/// What a training run needs besides the environments.
#[derive(Clone, Debug)]
pub struct TrainSetup {
    pub kind: ActorKind,
    pub map: GroupIndexMap,
    pub sched: ClipSchedule,
    pub config: SacConfig,
    pub seed: u64,
    /// Written into every checkpoint so a policy can be matched to its grouping.
    pub grouping_hash: Option<String>,
    /// Where `policy.ckpt` goes; nothing is written when unset.
    pub checkpoint_dir: Option<PathBuf>,
    /// Ends training at the first evaluation whose mean return reaches this.
    pub stop_at_return: Option<f64>,
}

pub struct TrainOutcome {
    pub agent: Agent,
    pub curve: Vec<CurveRow>,
}

pub const CHECKPOINT_FILE: &str = "policy.ckpt";

impl TrainSetup {
    fn save(&self, agent: &Agent) -> Result<()> {
        if let Some(dir) = &self.checkpoint_dir {
            let extra = serde_json::json!({
                "seed": self.seed,
                "grouping_hash": self.grouping_hash,
                "sac": self.config,
            });
            agent.to_checkpoint(extra).save(&dir.join(CHECKPOINT_FILE))?;
        }
        Ok(())
    }
}

/// Independent random streams of one run, reseeded on resume.
struct Streams {
    action: ChaCha8Rng,
    replay: ChaCha8Rng,
    resets: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64, step: u64) -> Streams {
        let base = seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(base);
            r.set_stream(k);
            r
        };
        Streams {
            action: stream(1),
            replay: stream(2),
            resets: stream(3),
        }
    }
}

/// Trains from scratch, or continues `resume` until `config.total_steps`.
/// A resumed run starts with an empty replay buffer and collects
/// `warmup_steps` transitions with its current policy before updating again.
pub fn train<E, F>(make_env: F, setup: &TrainSetup, resume: Option<Agent>) -> Result<TrainOutcome>
where
    E: Environment,
    F: Fn() -> Result<E>,
{
    let cfg = &setup.config;
    cfg.validate()?;
    setup.sched.validate()?;
    let mut envs: Vec<E> = (0..cfg.n_envs).map(|_| make_env()).collect::<Result<_>>()?;
    let mut eval_env = make_env()?;
    let n_obs = envs[0].obs_dim();
    if envs[0].action_dim() != setup.map.n_muscles() {
        return Err(Error::param(format!(
            "grouping covers {} muscles, environment has {}",
            setup.map.n_muscles(),
            envs[0].action_dim()
        )));
    }
    let mut agent = match resume {
        Some(a) => {
            if a.actor.n_obs() != n_obs || a.actor.map != setup.map || a.actor.kind != setup.kind {
                return Err(Error::param("checkpoint does not match this run"));
            }
            a
        }
        None => {
            let mut init = ChaCha8Rng::seed_from_u64(setup.seed);
            Agent::new(setup.kind, n_obs, &cfg.hidden, setup.map.clone(), setup.sched, cfg.initial_alpha, &mut init)?
        }
    };
    let resumed_at = agent.step;
    let mut rng = Streams::new(setup.seed, resumed_at);
    let mut buffer = ReplayBuffer::new(cfg.buffer_size)?;
    let schedule = cfg.schedule();
    let mut obs: Vec<Vec<f64>> = envs
        .iter_mut()
        .map(|e| e.reset(rng.resets.random()))
        .collect::<Result<_>>()?;
    let mut curve = Vec::new();
    let mut vector_steps = 0u64;
    let n_stored = agent.actor.n_stored();

    setup.save(&agent)?;
    let result = (|| -> Result<()> {
        while agent.step < cfg.total_steps {
            let t = agent.step;
            for (i, env) in envs.iter_mut().enumerate() {
                let stored = if t < cfg.warmup_steps {
                    (0..n_stored).map(|_| rng.action.random_range(-1.0..=1.0)).collect()
                } else {
                    agent.act(&obs[i], false, &mut rng.action)?
                };
                let ctrl = agent.excitations(&stored);
                let s = env.step(&ctrl)?;
                let tr = Transition {
                    obs: std::mem::take(&mut obs[i]),
                    action: stored,
                    reward: s.reward,
                    next_obs: s.obs.clone(),
                    done: s.terminated,
                    t,
                };
                tr.validate()?;
                buffer.push(tr);
                obs[i] = if s.done() { env.reset(rng.resets.random())? } else { s.obs };
            }
            let before = agent.step;
            agent.step += cfg.n_envs as u64;
            vector_steps += 1;

            let warm = agent.step - resumed_at >= cfg.warmup_steps;
            if warm && vector_steps % cfg.train_frequency == 0 {
                let lr = schedule.at(agent.step);
                for _ in 0..cfg.gradient_steps {
                    let batch = buffer.sample(cfg.batch_size, &mut rng.replay)?;
                    agent.update(&batch, cfg, lr, &mut rng.replay)?;
                }
            }

            if agent.step / cfg.eval_interval > before / cfg.eval_interval {
                let ev = evaluate(&agent, &mut eval_env, cfg.eval_episodes, EVAL_SEED_BASE, false)?;
                let (mean_return, std_return) = mean_std(&ev.returns);
                curve.push(CurveRow {
                    step: agent.step,
                    mean_return,
                    std_return,
                    alpha: agent.alpha(),
                    c: agent.clip_bound(),
                });
                if setup.stop_at_return.is_some_and(|r| mean_return >= r) {
                    break;
                }
            }
            if cfg.checkpoint_interval > 0 && agent.step / cfg.checkpoint_interval > before / cfg.checkpoint_interval {
                setup.save(&agent)?;
            }
        }
        Ok(())
    })();
    // flush whatever was learned, also when the run aborted
    setup.save(&agent)?;
    result?;
    Ok(TrainOutcome { agent, curve })
}

#[cfg(test)]
mod tests;
