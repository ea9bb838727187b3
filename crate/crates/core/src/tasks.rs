//! Reinforcement-learning tasks over the plant.
//!
//! Observation layout, in order: simulation time, `q` (N), `qdot` (N), muscle
//! force over `f_max`, normalized fiber length, normalized fiber velocity and
//! activation (N_m each), then the task extras:
//!
//! | task      | extras                                                   |
//! |-----------|----------------------------------------------------------|
//! | reach     | target `(x, y)`, tip `(x, y)`, target minus tip          |
//! | oscillate | `sin` and `cos` of the phase, reference minus `q[joint]` |

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{end_effector_position, Model, PlantState, DT};

/// Everything an agent sees after one control step.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// The episode ended in a state that cannot be continued.
    pub terminated: bool,
    /// The episode hit its time limit.
    pub truncated: bool,
}

impl Step {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Episodic environment driven by muscle excitations in `[0, 1]`.
pub trait Environment: Send {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, ctrl: &[f64]) -> Result<Step>;

    /// Simulation time and joint angles, for episode traces.
    fn posture(&self) -> (f64, Vec<f64>) {
        (0.0, Vec::new())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    #[default]
    Reach,
    Oscillate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    #[serde(default)]
    pub kind: TaskKind,
    #[serde(default = "default_episode_length")]
    pub episode_length: usize,
    #[serde(default = "default_w_p")]
    pub w_p: f64,
    #[serde(default = "default_w_a")]
    pub w_a: f64,
    #[serde(default)]
    pub alive: f64,
    /// Lower corner of the reach target box; defaults to the reachable box.
    #[serde(default)]
    pub target_low: Option<[f64; 2]>,
    #[serde(default)]
    pub target_high: Option<[f64; 2]>,
    /// Oscillation amplitude (rad).
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Oscillation period (s).
    #[serde(default = "default_period")]
    pub period: f64,
    /// Joint tracked by the oscillation task.
    #[serde(default)]
    pub joint: usize,
}

fn default_episode_length() -> usize {
    100
}

fn default_w_p() -> f64 {
    1.0
}

fn default_w_a() -> f64 {
    0.1
}

fn default_amplitude() -> f64 {
    0.5
}

fn default_period() -> f64 {
    1.0
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            kind: TaskKind::Reach,
            episode_length: default_episode_length(),
            w_p: default_w_p(),
            w_a: default_w_a(),
            alive: 0.0,
            target_low: None,
            target_high: None,
            amplitude: default_amplitude(),
            period: default_period(),
            joint: 0,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episode_length == 0 {
            return Err(Error::param("episode_length must be >= 1"));
        }
        for (name, v) in [("w_p", self.w_p), ("w_a", self.w_a), ("alive", self.alive)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(format!("{name} must be finite and >= 0")));
            }
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::param("period must be > 0"));
        }
        Ok(())
    }

    /// Largest possible per-step reward magnitude.
    pub fn reward_bound(&self) -> f64 {
        self.w_p + self.w_a + self.alive
    }
}

/// `exp(-10 sqrt(distance))`.
pub fn position_reward(distance: f64) -> f64 {
    (-10.0 * distance.sqrt()).exp()
}

/// `exp(-(q - reference)^2)`.
pub fn tracking_reward(q: f64, reference: f64) -> f64 {
    (-(q - reference).powi(2)).exp()
}

/// Euclidean norm of the activations over the muscle count.
pub fn activation_cost(act: &[f64]) -> f64 {
    act.iter().map(|a| a * a).sum::<f64>().sqrt() / act.len() as f64
}

#[derive(Clone, Debug)]
enum Goal {
    Reach {
        low: [f64; 2],
        high: [f64; 2],
        /// Tip positions over a dense joint-space sweep.
        reachable: Vec<[f64; 2]>,
        tolerance: f64,
        target: [f64; 2],
    },
    Oscillate,
}

/// A task over one plant instance.
#[derive(Clone, Debug)]
pub struct Task {
    model: Arc<Model>,
    config: TaskConfig,
    goal: Goal,
    state: PlantState,
    rng: ChaCha8Rng,
    steps: usize,
}

const SWEEP: usize = 61;

/// Tip positions on a grid over the joint limits.
fn reachable_points(model: &Model) -> Result<Vec<[f64; 2]>> {
    if model.end_effector.is_none() {
        return Err(Error::param(format!("model `{}` has no end effector", model.name)));
    }
    let n = model.n_joints();
    let total = SWEEP.pow(n as u32);
    let mut q = vec![0.0; n];
    let mut out = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        for (j, link) in model.links.iter().enumerate() {
            let [a, b] = link.limits;
            q[j] = a + (b - a) * (rem % SWEEP) as f64 / (SWEEP - 1) as f64;
            rem /= SWEEP;
        }
        out.push(end_effector_position(model, &q).unwrap());
    }
    Ok(out)
}

fn bounding_box(points: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Tip-to-target reaching with reward
/// `w_p exp(-10 sqrt(|target - tip|)) - w_a |act| / N_m + alive`.
pub fn reach_env(model: Arc<Model>, config: TaskConfig) -> Result<Task> {
    config.validate()?;
    let reachable = reachable_points(&model)?;
    let (box_lo, box_hi) = bounding_box(&reachable);
    let low = config.target_low.unwrap_or(box_lo);
    let high = config.target_high.unwrap_or(box_hi);
    for k in 0..2 {
        if !(low[k] < high[k]) {
            return Err(Error::param("target_low must lie below target_high"));
        }
        if low[k] < box_lo[k] - 1e-9 || high[k] > box_hi[k] + 1e-9 {
            return Err(Error::param(format!(
                "target bounds {low:?}..{high:?} exceed the reachable box {box_lo:?}..{box_hi:?}"
            )));
        }
    }
    // largest gap between neighbours along the first joint
    let tolerance = (1..reachable.len())
        .filter(|i| i % SWEEP != 0)
        .map(|i| distance(reachable[i - 1], reachable[i]))
        .fold(0.0, f64::max);
    let goal = Goal::Reach {
        low,
        high,
        reachable,
        tolerance,
        target: [0.0; 2],
    };
    Task::new(model, config, goal)
}

/// Tracking of `amplitude cos(2 pi t / period)` by one joint, rewarded with
/// `w_p exp(-(q - reference)^2) - w_a |act| / N_m + alive`.
pub fn oscillate_env(model: Arc<Model>, config: TaskConfig) -> Result<Task> {
    config.validate()?;
    if config.joint >= model.n_joints() {
        return Err(Error::param(format!(
            "joint {} out of range for {} joints",
            config.joint,
            model.n_joints()
        )));
    }
    Task::new(model, config, Goal::Oscillate)
}

/// Builds the environment named by `config.kind`.
pub fn make_env(model: Arc<Model>, config: &TaskConfig) -> Result<Task> {
    match config.kind {
        TaskKind::Reach => reach_env(model, config.clone()),
        TaskKind::Oscillate => oscillate_env(model, config.clone()),
    }
}

impl Task {
    fn new(model: Arc<Model>, config: TaskConfig, goal: Goal) -> Result<Task> {
        let state = model.initial_state();
        let mut task = Task {
            model,
            config,
            goal,
            state,
            rng: ChaCha8Rng::seed_from_u64(0),
            steps: 0,
        };
        task.reset(0)?;
        Ok(task)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &TaskConfig {
        &self.config
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn target(&self) -> Option<[f64; 2]> {
        match self.goal {
            Goal::Reach { target, .. } => Some(target),
            Goal::Oscillate => None,
        }
    }

    /// Places the reach target; it must lie inside the target box.
    pub fn set_target(&mut self, p: [f64; 2]) -> Result<()> {
        match &mut self.goal {
            Goal::Reach { low, high, target, .. } => {
                if (0..2).any(|k| p[k] < low[k] || p[k] > high[k]) {
                    return Err(Error::param(format!("target {p:?} outside {low:?}..{high:?}")));
                }
                *target = p;
                Ok(())
            }
            Goal::Oscillate => Err(Error::param("oscillation task has no target")),
        }
    }

    /// Replaces the plant state, e.g. to start from a chosen posture.
    pub fn set_state(&mut self, state: PlantState) -> Result<()> {
        if state.q.len() != self.model.n_joints() || state.muscles.len() != self.model.n_muscles() {
            return Err(Error::param("state does not match the model"));
        }
        self.state = state;
        Ok(())
    }

    fn tip(&self) -> [f64; 2] {
        end_effector_position(&self.model, &self.state.q).unwrap_or([0.0; 2])
    }

    fn reference(&self) -> f64 {
        self.config.amplitude * (2.0 * PI * self.state.t / self.config.period).cos()
    }

    pub fn observation(&self) -> Vec<f64> {
        let s = &self.state;
        let mut obs = Vec::with_capacity(self.obs_dim());
        obs.push(s.t);
        obs.extend_from_slice(&s.q);
        obs.extend_from_slice(&s.qdot);
        obs.extend(s.muscles.iter().zip(&self.model.muscles).map(|(m, p)| m.force / p.params.f_max));
        obs.extend(s.muscles.iter().map(|m| m.l_norm));
        obs.extend(s.muscles.iter().map(|m| m.v_norm));
        obs.extend(s.muscles.iter().map(|m| m.act));
        match self.goal {
            Goal::Reach { target, .. } => {
                let tip = self.tip();
                obs.extend_from_slice(&target);
                obs.extend_from_slice(&tip);
                obs.extend_from_slice(&[target[0] - tip[0], target[1] - tip[1]]);
            }
            Goal::Oscillate => {
                let phase = 2.0 * PI * s.t / self.config.period;
                obs.extend_from_slice(&[phase.sin(), phase.cos(), self.reference() - s.q[self.config.joint]]);
            }
        }
        obs
    }

    fn extras(&self) -> usize {
        match self.goal {
            Goal::Reach { .. } => 6,
            Goal::Oscillate => 3,
        }
    }

    fn reward(&self) -> f64 {
        let acts: Vec<f64> = self.state.activations().collect();
        let task = match self.goal {
            Goal::Reach { target, .. } => position_reward(distance(target, self.tip())),
            Goal::Oscillate => tracking_reward(self.state.q[self.config.joint], self.reference()),
        };
        self.config.w_p * task - self.config.w_a * activation_cost(&acts) + self.config.alive
    }

    fn sample_target(&mut self) -> Result<[f64; 2]> {
        let Goal::Reach { low, high, reachable, tolerance, .. } = &self.goal else {
            return Ok([0.0; 2]);
        };
        for _ in 0..10_000 {
            let p = [
                self.rng.random_range(low[0]..high[0]),
                self.rng.random_range(low[1]..high[1]),
            ];
            if reachable.iter().any(|r| distance(*r, p) <= *tolerance) {
                return Ok(p);
            }
        }
        Err(Error::param("target box contains no reachable point"))
    }
}

impl Environment for Task {
    fn obs_dim(&self) -> usize {
        1 + 2 * self.model.n_joints() + 4 * self.model.n_muscles() + self.extras()
    }

    fn action_dim(&self) -> usize {
        self.model.n_muscles()
    }

    fn posture(&self) -> (f64, Vec<f64>) {
        (self.state.t, self.state.q.clone())
    }

    /// Home posture at rest; a fresh target drawn from `seed`.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = self.model.initial_state();
        self.steps = 0;
        let target = self.sample_target()?;
        if let Goal::Reach { target: t, .. } = &mut self.goal {
            *t = target;
        }
        Ok(self.observation())
    }

    fn step(&mut self, ctrl: &[f64]) -> Result<Step> {
        self.steps += 1;
        let truncated = self.steps >= self.config.episode_length;
        match self.model.step(&self.state, ctrl, DT) {
            Ok(next) => {
                self.state = next;
                Ok(Step {
                    obs: self.observation(),
                    reward: self.reward(),
                    terminated: false,
                    truncated,
                })
            }
            Err(Error::Integration { .. }) => Ok(Step {
                obs: self.observation(),
                reward: 0.0,
                terminated: true,
                truncated,
            }),
            Err(e) => Err(e),
        }
    }
}

/// Per-step record of an episode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub t: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub ctrl: Vec<Vec<f64>>,
    pub reward: Vec<f64>,
}

impl Trace {
    pub fn push(&mut self, t: f64, q: Vec<f64>, ctrl: &[f64], reward: f64) {
        self.t.push(t);
        self.q.push(q);
        self.ctrl.push(ctrl.to_vec());
        self.reward.push(reward);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Columns `t, q0.., ctrl0.., reward`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |e: csv::Error| Error::format("trace csv", e);
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let nq = self.q.first().map_or(0, Vec::len);
        let nc = self.ctrl.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((0..nq).map(|j| format!("q{j}")));
        header.extend((0..nc).map(|i| format!("ctrl{i}")));
        header.push("reward".into());
        w.write_record(&header).map_err(csv_err)?;
        for k in 0..self.len() {
            let mut row = vec![self.t[k].to_string()];
            row.extend(self.q[k].iter().map(f64::to_string));
            row.extend(self.ctrl[k].iter().map(f64::to_string));
            row.push(self.reward[k].to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests;
