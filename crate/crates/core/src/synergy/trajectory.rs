use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::matrix::Matrix;
use crate::plant::{set_joint_velocity, Model, DT};

/// Random joint-velocity perturbation used to excite the plant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    /// Number of simulation steps recorded.
    #[serde(default = "default_total_steps")]
    pub total_steps: usize,
    /// A new joint velocity is drawn every this many steps.
    #[serde(default = "default_control_frequency")]
    pub control_frequency: usize,
    /// Half-width of the uniform joint-velocity distribution (rad/s).
    #[serde(default = "default_amplitude")]
    pub control_amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_total_steps() -> usize {
    500_000
}

fn default_control_frequency() -> usize {
    10
}

fn default_amplitude() -> f64 {
    5.0
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            total_steps: default_total_steps(),
            control_frequency: default_control_frequency(),
            control_amplitude: default_amplitude(),
            seed: 0,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::param("total_steps must be > 0"));
        }
        if self.control_frequency == 0 {
            return Err(Error::param("control_frequency must be >= 1"));
        }
        if !(self.control_amplitude.is_finite() && self.control_amplitude >= 0.0) {
            return Err(Error::param("control_amplitude must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        PerturbationConfig {
            seed,
            ..self.clone()
        }
    }
}

/// Muscle lengths recorded under perturbation, one row per step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBuffer {
    pub model: String,
    pub muscle_names: Vec<String>,
    pub dt: f64,
    /// `N_s x N_m` lengths (m).
    pub lengths: Matrix,
}

impl TrajectoryBuffer {
    pub fn n_steps(&self) -> usize {
        self.lengths.rows()
    }

    pub fn n_muscles(&self) -> usize {
        self.lengths.cols()
    }

    /// The first `rows` samples.
    pub fn truncated(&self, rows: usize) -> Result<TrajectoryBuffer> {
        if rows == 0 || rows > self.n_steps() {
            return Err(Error::param(format!(
                "cannot truncate {} samples to {rows}",
                self.n_steps()
            )));
        }
        let cols = self.n_muscles();
        Ok(TrajectoryBuffer {
            lengths: Matrix::from_vec(rows, cols, self.lengths.as_slice()[..rows * cols].to_vec()),
            ..self.clone()
        })
    }
}

/// Drives the plant with zero excitation while resampling the joint velocity
/// uniformly in `[-A, A]` every `control_frequency` steps, recording the
/// muscle lengths after each step.
pub fn generate_trajectory(model: &Model, config: &PerturbationConfig) -> Result<TrajectoryBuffer> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = model.n_joints();
    let nm = model.n_muscles();
    let zero = vec![0.0; nm];
    let amp = config.control_amplitude;
    let mut state = model.initial_state();
    let mut data = Vec::with_capacity(config.total_steps * nm);
    let mut qdot = vec![0.0; n];
    for t in 0..config.total_steps {
        if t % config.control_frequency == 0 {
            for v in qdot.iter_mut() {
                *v = if amp > 0.0 { rng.random_range(-amp..=amp) } else { 0.0 };
            }
            state = set_joint_velocity(&state, &qdot)?;
        }
        state = model.step(&state, &zero, DT)?;
        data.extend_from_slice(&state.lengths);
    }
    Ok(TrajectoryBuffer {
        model: model.name.clone(),
        muscle_names: model.muscle_names(),
        dt: DT,
        lengths: Matrix::from_vec(config.total_steps, nm, data),
    })
}

/// One trajectory per seed, in seed order.
pub fn generate_trajectories(
    model: &Model,
    config: &PerturbationConfig,
    seeds: &[u64],
    mode: Parallelism,
) -> Result<Vec<TrajectoryBuffer>> {
    mode.map(seeds.len(), |k| generate_trajectory(model, &config.with_seed(seeds[k])))
        .into_iter()
        .collect()
}
