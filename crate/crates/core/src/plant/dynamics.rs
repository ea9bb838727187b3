//! Recursive Newton-Euler inverse dynamics for planar kinematic trees.

use super::kinematics::{cross, perp, sub, Pose};
use super::model::Model;
use crate::matrix::Matrix;

/// Joint torques required to realize `qdd` at `(q, qd)` under `gravity`.
pub fn inverse_dynamics(
    model: &Model,
    pose: &Pose,
    qd: &[f64],
    qdd: &[f64],
    gravity: [f64; 2],
) -> Vec<f64> {
    let n = model.links.len();
    let mut omega = vec![0.0; n];
    let mut alpha = vec![0.0; n];
    let mut acc_origin = vec![[0.0; 2]; n];
    let mut force = vec![[0.0; 2]; n];
    let mut moment = vec![0.0; n];

    // Gravity enters as an upward acceleration of the ground.
    let ground_acc = [-gravity[0], -gravity[1]];
    for (k, link) in model.links.iter().enumerate() {
        let (w_p, a_p, acc_p) = match link.parent {
            Some(p) => {
                let r = sub(pose.origin[k], pose.origin[p]);
                let t = perp(r);
                (
                    omega[p],
                    alpha[p],
                    [
                        acc_origin[p][0] + alpha[p] * t[0] - omega[p] * omega[p] * r[0],
                        acc_origin[p][1] + alpha[p] * t[1] - omega[p] * omega[p] * r[1],
                    ],
                )
            }
            None => (0.0, 0.0, ground_acc),
        };
        omega[k] = w_p + qd[k];
        alpha[k] = a_p + qdd[k];
        acc_origin[k] = acc_p;
        let c = sub(pose.com(model, k), pose.origin[k]);
        let t = perp(c);
        let acc_com = [
            acc_p[0] + alpha[k] * t[0] - omega[k] * omega[k] * c[0],
            acc_p[1] + alpha[k] * t[1] - omega[k] * omega[k] * c[1],
        ];
        force[k] = [link.mass * acc_com[0], link.mass * acc_com[1]];
        moment[k] = link.inertia * alpha[k] + cross(c, force[k]);
    }

    // Children precede parents in reverse order; fold each link's wrench
    // into its parent about the parent's joint.
    for k in (0..n).rev() {
        if let Some(p) = model.links[k].parent {
            let r = sub(pose.origin[k], pose.origin[p]);
            let f = force[k];
            moment[p] += moment[k] + cross(r, f);
            force[p][0] += f[0];
            force[p][1] += f[1];
        }
    }
    moment
}

/// Joint-space inertia matrix `M(q)`.
pub fn mass_matrix(model: &Model, pose: &Pose) -> Matrix {
    let n = model.links.len();
    let zero = vec![0.0; n];
    let mut m = Matrix::zeros(n, n);
    let mut unit = vec![0.0; n];
    for j in 0..n {
        unit.iter_mut().for_each(|u| *u = 0.0);
        unit[j] = 1.0;
        let col = inverse_dynamics(model, pose, &zero, &unit, [0.0, 0.0]);
        for (i, v) in col.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    m
}

/// Coriolis, centrifugal and gravity torques `c(q, qd)`.
pub fn bias_forces(model: &Model, pose: &Pose, qd: &[f64]) -> Vec<f64> {
    let zero = vec![0.0; qd.len()];
    inverse_dynamics(model, pose, qd, &zero, model.gravity)
}

/// Kinetic plus gravitational potential energy (J).
pub fn mechanical_energy(model: &Model, q: &[f64], qd: &[f64]) -> f64 {
    let pose = Pose::new(model, q);
    let n = model.links.len();
    let mut omega = vec![0.0; n];
    let mut vel_origin = vec![[0.0; 2]; n];
    let mut energy = 0.0;
    for (k, link) in model.links.iter().enumerate() {
        if let Some(p) = link.parent {
            let t = perp(sub(pose.origin[k], pose.origin[p]));
            vel_origin[k] = [
                vel_origin[p][0] + omega[p] * t[0],
                vel_origin[p][1] + omega[p] * t[1],
            ];
            omega[k] = omega[p];
        }
        omega[k] += qd[k];
        let com = pose.com(model, k);
        let t = perp(sub(com, pose.origin[k]));
        let v = [
            vel_origin[k][0] + omega[k] * t[0],
            vel_origin[k][1] + omega[k] * t[1],
        ];
        energy += 0.5 * link.mass * (v[0] * v[0] + v[1] * v[1]);
        energy += 0.5 * link.inertia * omega[k] * omega[k];
        energy -= link.mass * (model.gravity[0] * com[0] + model.gravity[1] * com[1]);
    }
    energy
}
