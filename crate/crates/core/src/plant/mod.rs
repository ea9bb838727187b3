//! Planar tendon-driven rigid-body plant.
//!
//! Joint accelerations solve `M(q) qdd = R(q)^T f - c(q, qd) - b qd`, where
//! `R` holds the muscle moment arms and `f` the Hill-type tensions. Velocities
//! and angles advance with semi-implicit Euler; joint limits are hard clamps
//! that zero any velocity pushing into the limit.

mod builtin;
mod dynamics;
mod format;
mod kinematics;
mod model;

pub use builtin::{builtin_model, builtin_names, calibrate_muscles};
pub use dynamics::{bias_forces, inverse_dynamics, mass_matrix, mechanical_energy};
pub use format::{load_model, model_from_toml, model_to_toml, save_model};
pub use kinematics::{end_effector_position, joint_moves, moment_arms, muscle_lengths, Pose};
pub use model::{
    EndEffector, EndEffectorSpec, Frame, Link, LinkSpec, Model, ModelSpec, Muscle, MuscleSpec,
    ViaPoint, ViaPointSpec, GROUND,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::muscle::{self, MuscleState};

/// Control step used by every environment (s).
pub const DT: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub muscles: Vec<MuscleState>,
    /// Muscle path lengths at `q` (m).
    pub lengths: Vec<f64>,
    pub t: f64,
    pub steps: u64,
}

impl PlantState {
    pub fn activations(&self) -> impl Iterator<Item = f64> + '_ {
        self.muscles.iter().map(|m| m.act)
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qdot).chain(&self.lengths).all(|v| v.is_finite())
            && self
                .muscles
                .iter()
                .all(|m| m.act.is_finite() && m.force.is_finite() && m.v_norm.is_finite())
    }
}

impl Model {
    /// State at rest in configuration `q` with zero activation.
    pub fn state_at(&self, q: &[f64]) -> Result<PlantState> {
        if q.len() != self.n_joints() || q.iter().any(|v| !v.is_finite()) {
            return Err(Error::param(format!(
                "configuration must hold {} finite angles",
                self.n_joints()
            )));
        }
        let lengths = muscle_lengths(self, q);
        let muscles = self
            .muscles
            .iter()
            .zip(&lengths)
            .map(|(m, &len)| {
                let mut st = MuscleState::at_rest((len - m.tendon_slack) / m.params.l_opt);
                st.force = muscle::muscle_force(&st, &m.params);
                st
            })
            .collect();
        Ok(PlantState {
            q: q.to_vec(),
            qdot: vec![0.0; q.len()],
            muscles,
            lengths,
            t: 0.0,
            steps: 0,
        })
    }

    pub fn initial_state(&self) -> PlantState {
        self.state_at(&self.home).expect("validated home configuration")
    }

    /// Advances the plant by `dt` under muscle excitations `ctrl`.
    pub fn step(&self, state: &PlantState, ctrl: &[f64], dt: f64) -> Result<PlantState> {
        let n = self.n_joints();
        let nm = self.n_muscles();
        if ctrl.len() != nm {
            return Err(Error::param(format!(
                "expected {nm} excitations, got {}",
                ctrl.len()
            )));
        }
        if !(dt > 0.0 && dt <= muscle::MAX_STEP) {
            return Err(Error::domain(format!("step size must lie in (0, 0.01], got {dt}")));
        }

        let mut muscles = state.muscles.clone();
        let mut tension = vec![0.0; nm];
        for ((m, st), (&u, f)) in self
            .muscles
            .iter()
            .zip(muscles.iter_mut())
            .zip(ctrl.iter().zip(tension.iter_mut()))
        {
            st.act = muscle::activation_step(u, st.act, &m.params, dt)?;
            *f = muscle::muscle_force(st, &m.params);
        }

        let pose = Pose::new(self, &state.q);
        let arms = kinematics::moment_arms_at(self, &pose);
        let bias = bias_forces(self, &pose, &state.qdot);
        let mut rhs = DVector::zeros(n);
        for j in 0..n {
            let mut torque = 0.0;
            for (i, f) in tension.iter().enumerate() {
                torque += arms[(i, j)] * f;
            }
            rhs[j] = torque - bias[j] - self.links[j].damping * state.qdot[j];
        }
        let mass = mass_matrix(self, &pose);
        let mass = DMatrix::from_row_slice(n, n, mass.as_slice());
        let qdd = mass
            .cholesky()
            .ok_or_else(|| self.integration_error(state, "mass matrix not positive definite"))?
            .solve(&rhs);

        let mut q = state.q.clone();
        let mut qdot = state.qdot.clone();
        for j in 0..n {
            qdot[j] += dt * qdd[j];
            q[j] += dt * qdot[j];
            let [lo, hi] = self.links[j].limits;
            if q[j] < lo {
                q[j] = lo;
                qdot[j] = qdot[j].max(0.0);
            } else if q[j] > hi {
                q[j] = hi;
                qdot[j] = qdot[j].min(0.0);
            }
        }

        let lengths = muscle_lengths(self, &q);
        for ((m, st), (&new, &old)) in self
            .muscles
            .iter()
            .zip(muscles.iter_mut())
            .zip(lengths.iter().zip(&state.lengths))
        {
            st.l_norm = (new - m.tendon_slack) / m.params.l_opt;
            st.v_norm = (new - old) / dt / (m.params.l_opt * m.params.v_max);
            st.force = muscle::muscle_force(st, &m.params);
        }

        let next = PlantState {
            q,
            qdot,
            muscles,
            lengths,
            t: state.t + dt,
            steps: state.steps + 1,
        };
        if !next.is_finite() {
            return Err(self.integration_error(state, "non-finite state"));
        }
        Ok(next)
    }

    fn integration_error(&self, state: &PlantState, detail: &str) -> Error {
        Error::Integration {
            step: state.steps,
            time: state.t,
            detail: format!("{detail} (q = {:?}, qdot = {:?})", state.q, state.qdot),
        }
    }
}

/// Overwrites the joint velocities, leaving angles and muscle states untouched.
pub fn set_joint_velocity(state: &PlantState, qdot: &[f64]) -> Result<PlantState> {
    if qdot.len() != state.qdot.len() || qdot.iter().any(|v| !v.is_finite()) {
        return Err(Error::param(format!(
            "joint velocity must hold {} finite values",
            state.qdot.len()
        )));
    }
    let mut next = state.clone();
    next.qdot.copy_from_slice(qdot);
    Ok(next)
}
