//! Grouped action heads. A policy emits one squashed-Gaussian action per
//! synergy group plus a correction weight for every non-representative muscle;
//! [`compose_action`] expands these into one action per muscle.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Cache, Mlp};
use crate::synergy::GroupingResult;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

/// Growing bound on the correction multipliers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipSchedule {
    /// Slope of the bound per environment step.
    pub k_d: f64,
    /// Step at which the bound starts to grow.
    pub a_d: f64,
    /// Largest bound, and the scale applied to raw weights.
    pub kappa: f64,
}

impl Default for ClipSchedule {
    fn default() -> Self {
        ClipSchedule {
            k_d: 5e-8,
            a_d: 1e6,
            kappa: 1.0,
        }
    }
}

impl ClipSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_d.is_finite() && self.k_d >= 0.0) {
            return Err(Error::param("k_d must be finite and >= 0"));
        }
        if !(self.a_d.is_finite() && self.a_d >= 0.0) {
            return Err(Error::param("a_d must be finite and >= 0"));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::param("kappa must be finite and > 0"));
        }
        Ok(())
    }

    /// `c = clamp(k_d (t - a_d), 0, kappa)`.
    pub fn bound(&self, t: u64) -> f64 {
        (self.k_d * (t as f64 - self.a_d)).clamp(0.0, self.kappa)
    }
}

/// Where each muscle's action comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupIndexMap {
    /// Group of every muscle.
    pub group: Vec<usize>,
    /// Index into the weight vector, `None` for representatives.
    pub weight: Vec<Option<usize>>,
    pub n_groups: usize,
}

impl GroupIndexMap {
    /// The smallest index in each group is its representative; the remaining
    /// muscles take weight slots in ascending muscle order.
    pub fn new(grouping: &GroupingResult) -> GroupIndexMap {
        let n = grouping.n_items();
        let mut group = vec![0; n];
        let mut rep = vec![false; n];
        for (g, members) in grouping.groups.iter().enumerate() {
            for &m in members {
                group[m] = g;
            }
            rep[members[0]] = true;
        }
        let mut next = 0;
        let weight = rep
            .iter()
            .map(|&r| {
                if r {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect();
        GroupIndexMap {
            group,
            weight,
            n_groups: grouping.n_groups(),
        }
    }

    /// Every muscle in its own group.
    pub fn identity(n: usize) -> GroupIndexMap {
        GroupIndexMap {
            group: (0..n).collect(),
            weight: vec![None; n],
            n_groups: n,
        }
    }

    pub fn n_muscles(&self) -> usize {
        self.group.len()
    }

    pub fn n_weights(&self) -> usize {
        self.n_muscles() - self.n_groups
    }

    pub fn is_representative(&self, m: usize) -> bool {
        self.weight[m].is_none()
    }
}

fn check_dims(a_g: &[f64], w: &[f64], map: &GroupIndexMap) -> Result<()> {
    if a_g.len() != map.n_groups || w.len() != map.n_weights() {
        return Err(Error::param(format!(
            "expected {} group actions and {} weights, got {} and {}",
            map.n_groups,
            map.n_weights(),
            a_g.len(),
            w.len()
        )));
    }
    Ok(())
}

/// Muscle actions for training step `t`.
pub fn compose_action(
    a_g: &[f64],
    w: &[f64],
    map: &GroupIndexMap,
    t: u64,
    sched: &ClipSchedule,
) -> Result<Vec<f64>> {
    check_dims(a_g, w, map)?;
    Ok(compose_with_bound(a_g, w, map, sched.bound(t), sched.kappa))
}

/// Representatives copy their group action; every other muscle receives the
/// group action times `clamp(kappa w, -c, c)`. The result is clipped to
/// `[-1, 1]` and ordered by muscle index.
pub fn compose_with_bound(a_g: &[f64], w: &[f64], map: &GroupIndexMap, c: f64, kappa: f64) -> Vec<f64> {
    (0..map.n_muscles())
        .map(|m| {
            let g = a_g[map.group[m]];
            let raw = match map.weight[m] {
                None => g,
                Some(k) => g * (kappa * w[k]).clamp(-c, c),
            };
            raw.clamp(-1.0, 1.0)
        })
        .collect()
}

/// Pulls a gradient on the composed action back onto `a_g` and `w`.
pub fn compose_backward(
    a_g: &[f64],
    w: &[f64],
    map: &GroupIndexMap,
    c: f64,
    kappa: f64,
    d_a: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut d_ag = vec![0.0; a_g.len()];
    let mut d_w = vec![0.0; w.len()];
    for m in 0..map.n_muscles() {
        let gi = map.group[m];
        let g = a_g[gi];
        match map.weight[m] {
            None => {
                if g.abs() < 1.0 {
                    d_ag[gi] += d_a[m];
                }
            }
            Some(k) => {
                let scaled = kappa * w[k];
                let mult = scaled.clamp(-c, c);
                if (g * mult).abs() >= 1.0 {
                    continue;
                }
                d_ag[gi] += d_a[m] * mult;
                if scaled.abs() < c {
                    d_w[k] += d_a[m] * g * kappa;
                }
            }
        }
    }
    (d_ag, d_w)
}

/// Maps an action in `[-1, 1]` to muscle excitation through a sharpened
/// sigmoid of `(a + 1) / 2`.
pub fn to_excitation(a: f64) -> f64 {
    let a_bar = 0.5 * (a + 1.0);
    1.0 / (1.0 + (-5.0 * (a_bar - 0.5)).exp())
}

pub fn to_excitations(a: &[f64]) -> Vec<f64> {
    a.iter().map(|&v| to_excitation(v)).collect()
}

/// `log(1 - tanh(u)^2)`, stable for large `|u|`.
pub fn log_tanh_jacobian(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Log density of `tanh(mu + sigma eps)` at the sample drawn with `eps`.
pub fn squashed_log_prob(eps: f64, log_std: f64, u: f64) -> f64 {
    -0.5 * eps * eps - log_std - HALF_LOG_2PI - log_tanh_jacobian(u)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorKind {
    Flat,
    DynSyn,
}

impl std::str::FromStr for ActorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(ActorKind::Flat),
            "dynsyn" => Ok(ActorKind::DynSyn),
            _ => Err(Error::Lookup {
                kind: "actor",
                name: s.to_string(),
            }),
        }
    }
}

/// Stochastic actor. The network outputs `[mu_e, log_std_e, mu_w]`, where the
/// `e` head is the one entropy is measured on (all muscles for the flat actor,
/// the group actions for DynSyn) and `w` holds the correction weights, whose
/// log standard deviations are free parameters independent of the state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub kind: ActorKind,
    pub net: Mlp,
    pub log_std_w: Vec<f64>,
    pub map: GroupIndexMap,
    pub sched: ClipSchedule,
}

/// A batch of reparameterized samples with what the backward pass needs.
pub struct ActorSample {
    /// `[a_e; w]` per column.
    pub action: DMatrix<f64>,
    pub log_prob: Vec<f64>,
    /// The standard-normal noise behind `action`.
    pub eps: DMatrix<f64>,
    cache: Cache,
    out: DMatrix<f64>,
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(
        kind: ActorKind,
        n_obs: usize,
        hidden: &[usize],
        map: GroupIndexMap,
        sched: ClipSchedule,
        rng: &mut R,
    ) -> Result<Actor> {
        sched.validate()?;
        if kind == ActorKind::Flat && map.n_weights() != 0 {
            return Err(Error::param("flat actor needs one group per muscle"));
        }
        let n_e = map.n_groups;
        let n_w = map.n_weights();
        let mut sizes = vec![n_obs];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * n_e + n_w);
        Ok(Actor {
            kind,
            net: Mlp::new(&sizes, rng)?,
            log_std_w: vec![0.0; n_w],
            map,
            sched,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.net.n_inputs()
    }

    /// Entropy-head width.
    pub fn n_e(&self) -> usize {
        self.map.n_groups
    }

    pub fn n_w(&self) -> usize {
        self.map.n_weights()
    }

    /// Width of the stored action `[a_e; w]`.
    pub fn n_stored(&self) -> usize {
        self.n_e() + self.n_w()
    }

    pub fn n_muscles(&self) -> usize {
        self.map.n_muscles()
    }

    pub fn n_params(&self) -> usize {
        self.net.n_params() + self.log_std_w.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.net.params.clone();
        p.extend_from_slice(&self.log_std_w);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let n = self.net.n_params();
        self.net.params.copy_from_slice(&p[..n]);
        self.log_std_w.copy_from_slice(&p[n..]);
    }

    fn check_obs(&self, obs: &DMatrix<f64>) -> Result<()> {
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite observation"));
        }
        Ok(())
    }

    /// Draws `[a_e; w]` for every column of `obs`.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &DMatrix<f64>, rng: &mut R) -> Result<ActorSample> {
        let eps = DMatrix::from_fn(self.n_stored(), obs.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
        self.sample_with_noise(obs, eps)
    }

    /// Reparameterized sample for given standard-normal noise.
    pub fn sample_with_noise(&self, obs: &DMatrix<f64>, eps: DMatrix<f64>) -> Result<ActorSample> {
        self.check_obs(obs)?;
        let (out, cache) = self.net.forward_batch(obs)?;
        let (n_e, n_w) = (self.n_e(), self.n_w());
        let batch = obs.ncols();
        if eps.shape() != (n_e + n_w, batch) {
            return Err(Error::param("noise shape does not match the batch"));
        }
        let mut action = DMatrix::zeros(n_e + n_w, batch);
        let mut log_prob = vec![0.0; batch];
        for b in 0..batch {
            for i in 0..n_e {
                let ls = out[(n_e + i, b)].clamp(LOG_STD_MIN, LOG_STD_MAX);
                let u = out[(i, b)] + ls.exp() * eps[(i, b)];
                action[(i, b)] = u.tanh();
                log_prob[b] += squashed_log_prob(eps[(i, b)], ls, u);
            }
            for k in 0..n_w {
                let ls = self.log_std_w[k].clamp(LOG_STD_MIN, LOG_STD_MAX);
                let u = out[(2 * n_e + k, b)] + ls.exp() * eps[(n_e + k, b)];
                action[(n_e + k, b)] = u.tanh();
            }
        }
        Ok(ActorSample {
            action,
            log_prob,
            cache,
            out,
            eps,
        })
    }

    /// The squashed means.
    pub fn deterministic(&self, obs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_obs(obs)?;
        let out = self.net.predict(obs)?;
        let (n_e, n_w) = (self.n_e(), self.n_w());
        Ok(DMatrix::from_fn(n_e + n_w, obs.ncols(), |i, b| {
            if i < n_e {
                out[(i, b)].tanh()
            } else {
                out[(n_e + i, b)].tanh()
            }
        }))
    }

    /// Muscle actions in `[-1, 1]` for a stored action column.
    pub fn compose(&self, stored: &[f64], t: u64) -> Vec<f64> {
        let n_e = self.n_e();
        compose_with_bound(&stored[..n_e], &stored[n_e..], &self.map, self.sched.bound(t), self.sched.kappa)
    }

    /// Composes every column of a stored-action batch.
    pub fn compose_batch(&self, stored: &DMatrix<f64>, t: u64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_muscles(), stored.ncols());
        for b in 0..stored.ncols() {
            let col: Vec<f64> = stored.column(b).iter().copied().collect();
            out.column_mut(b).copy_from_slice(&self.compose(&col, t));
        }
        out
    }

    /// Gradient of the composed batch pulled back to stored actions.
    pub fn compose_backward_batch(&self, stored: &DMatrix<f64>, d_a: &DMatrix<f64>, t: u64) -> DMatrix<f64> {
        let n_e = self.n_e();
        let c = self.sched.bound(t);
        let mut d = DMatrix::zeros(self.n_stored(), stored.ncols());
        for b in 0..stored.ncols() {
            let col: Vec<f64> = stored.column(b).iter().copied().collect();
            let da: Vec<f64> = d_a.column(b).iter().copied().collect();
            let (d_ag, d_w) = compose_backward(&col[..n_e], &col[n_e..], &self.map, c, self.sched.kappa, &da);
            for i in 0..n_e {
                d[(i, b)] = d_ag[i];
            }
            for k in 0..d_w.len() {
                d[(n_e + k, b)] = d_w[k];
            }
        }
        d
    }

    /// Parameter gradient (network, then `log_std_w`) of
    /// `sum(d_action ⊙ action) + sum(d_log_prob ⊙ log_prob)`.
    pub fn backward(&self, s: &ActorSample, d_action: &DMatrix<f64>, d_log_prob: &[f64]) -> Vec<f64> {
        let (n_e, n_w) = (self.n_e(), self.n_w());
        let batch = s.action.ncols();
        let mut d_out = DMatrix::zeros(2 * n_e + n_w, batch);
        let mut d_ls_w = vec![0.0; n_w];
        for b in 0..batch {
            let dl = d_log_prob[b];
            for i in 0..n_e {
                let raw_ls = s.out[(n_e + i, b)];
                let ls = raw_ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
                let a = s.action[(i, b)];
                let eps = s.eps[(i, b)];
                // d/du of -log(1 - tanh(u)^2) is 2 tanh(u).
                let d_u = d_action[(i, b)] * (1.0 - a * a) + dl * 2.0 * a;
                d_out[(i, b)] = d_u;
                if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_ls) {
                    d_out[(n_e + i, b)] = d_u * ls.exp() * eps - dl;
                }
            }
            for k in 0..n_w {
                let w = s.action[(n_e + k, b)];
                let d_u = d_action[(n_e + k, b)] * (1.0 - w * w);
                d_out[(2 * n_e + k, b)] = d_u;
                let raw_ls = self.log_std_w[k];
                if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_ls) {
                    d_ls_w[k] += d_u * raw_ls.exp() * s.eps[(n_e + k, b)];
                }
            }
        }
        let (mut grads, _) = self.net.backward(&s.cache, &d_out);
        grads.extend_from_slice(&d_ls_w);
        grads
    }
}
