//! Forward kinematics, muscle path lengths and moment arms.

use super::model::{Frame, Model};
use crate::matrix::Matrix;

pub(crate) fn rotate(c: f64, s: f64, p: [f64; 2]) -> [f64; 2] {
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

pub(crate) fn perp(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}

pub(crate) fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// World placement of every link frame at one configuration.
#[derive(Clone, Debug)]
pub struct Pose {
    pub angle: Vec<f64>,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
    /// Joint position of each link in world coordinates.
    pub origin: Vec<[f64; 2]>,
}

impl Pose {
    pub fn new(model: &Model, q: &[f64]) -> Pose {
        let n = model.links.len();
        let mut pose = Pose {
            angle: Vec::with_capacity(n),
            cos: Vec::with_capacity(n),
            sin: Vec::with_capacity(n),
            origin: Vec::with_capacity(n),
        };
        for (k, link) in model.links.iter().enumerate() {
            let (base_angle, origin) = match link.parent {
                Some(p) => {
                    let o = pose.origin[p];
                    let r = rotate(pose.cos[p], pose.sin[p], link.origin);
                    (pose.angle[p], [o[0] + r[0], o[1] + r[1]])
                }
                None => (0.0, link.origin),
            };
            let angle = base_angle + link.angle_offset + q[k];
            pose.angle.push(angle);
            pose.cos.push(angle.cos());
            pose.sin.push(angle.sin());
            pose.origin.push(origin);
        }
        pose
    }

    /// World coordinates of a point fixed in `frame`.
    pub fn world(&self, frame: Frame, p: [f64; 2]) -> [f64; 2] {
        match frame {
            Frame::Ground => p,
            Frame::Link(k) => {
                let r = rotate(self.cos[k], self.sin[k], p);
                [self.origin[k][0] + r[0], self.origin[k][1] + r[1]]
            }
        }
    }

    /// World position of link `k`'s centre of mass.
    pub fn com(&self, model: &Model, k: usize) -> [f64; 2] {
        self.world(Frame::Link(k), [model.links[k].com, 0.0])
    }
}

/// Whether rotating joint `j` moves points fixed in `frame`.
pub fn joint_moves(model: &Model, j: usize, frame: Frame) -> bool {
    let mut cur = match frame {
        Frame::Ground => return false,
        Frame::Link(k) => Some(k),
    };
    while let Some(k) = cur {
        if k == j {
            return true;
        }
        cur = model.links[k].parent;
    }
    false
}

/// Total via-point path length of each muscle (m).
pub fn muscle_lengths(model: &Model, q: &[f64]) -> Vec<f64> {
    let pose = Pose::new(model, q);
    lengths_at(model, &pose)
}

pub(crate) fn lengths_at(model: &Model, pose: &Pose) -> Vec<f64> {
    model
        .muscles
        .iter()
        .map(|m| {
            let pts: Vec<[f64; 2]> = m.path.iter().map(|v| pose.world(v.frame, v.point)).collect();
            pts.windows(2)
                .map(|w| {
                    let d = sub(w[1], w[0]);
                    d[0].hypot(d[1])
                })
                .sum()
        })
        .collect()
}

/// Moment-arm matrix `r[i][j] = -d length_i / d q_j` (m), `N_m x N`.
///
/// A point fixed in a frame moved by joint `j` has velocity
/// `perp(p - o_j)` per unit joint rate; each segment contributes the
/// projection of its endpoints' relative velocity onto its unit direction.
pub fn moment_arms(model: &Model, q: &[f64]) -> Matrix {
    let pose = Pose::new(model, q);
    moment_arms_at(model, &pose)
}

pub(crate) fn moment_arms_at(model: &Model, pose: &Pose) -> Matrix {
    let n = model.links.len();
    let mut out = Matrix::zeros(model.muscles.len(), n);
    for (i, m) in model.muscles.iter().enumerate() {
        let pts: Vec<[f64; 2]> = m.path.iter().map(|v| pose.world(v.frame, v.point)).collect();
        for s in 0..pts.len() - 1 {
            let d = sub(pts[s + 1], pts[s]);
            let len = d[0].hypot(d[1]);
            if len == 0.0 {
                continue;
            }
            let u = [d[0] / len, d[1] / len];
            let (fa, fb) = (m.path[s].frame, m.path[s + 1].frame);
            for j in 0..n {
                let o = pose.origin[j];
                // Relative velocity of the segment's endpoints per unit rate of
                // joint j. A segment carried rigidly by the joint only rotates.
                let rel = match (joint_moves(model, j, fa), joint_moves(model, j, fb)) {
                    (true, true) | (false, false) => continue,
                    (false, true) => perp(sub(pts[s + 1], o)),
                    (true, false) => {
                        let v = perp(sub(pts[s], o));
                        [-v[0], -v[1]]
                    }
                };
                out[(i, j)] -= u[0] * rel[0] + u[1] * rel[1];
            }
        }
    }
    out
}

/// World position of the model's end effector, if it has one.
pub fn end_effector_position(model: &Model, q: &[f64]) -> Option<[f64; 2]> {
    let ee = model.end_effector?;
    Some(Pose::new(model, q).world(Frame::Link(ee.link), ee.point))
}
