//! Hill-type muscle-tendon unit: activation dynamics and force generation.
//!
//! Activation follows the first-order nonlinear filter
//!
//! ```text
//! d act / dt = (ctrl - act) / tau(ctrl, act)
//! tau = tau_act * (0.5 + 1.5 act)      if ctrl > act
//! tau = tau_deact / (0.5 + 1.5 act)    otherwise
//! ```
//!
//! and tension is `f_max * (F_l(l) * F_v(v) * act + F_p(l))` over normalized
//! fiber length `l` and velocity `v`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest control step the activation integrator accepts (s).
pub const MAX_STEP: f64 = 0.01;

/// Width of the Gaussian active force-length curve.
pub const FL_WIDTH: f64 = 0.45;

/// Ratio of shortening-branch curvature in the Hill hyperbola.
const FV_SHORTEN_CURVATURE: f64 = 0.25;
/// Eccentric force plateau, as a multiple of isometric force.
const FV_LENGTHEN_MAX: f64 = 1.5;
/// Passive force at `l_norm = 1.3`, as a fraction of `f_max`.
const FP_AT_STRAIN: f64 = 0.5;
const FP_STRAIN: f64 = 0.3;
const FP_SHAPE: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuscleParams {
    /// Maximum isometric force (N).
    pub f_max: f64,
    /// Optimal fiber length (m).
    pub l_opt: f64,
    /// Maximum shortening velocity (optimal lengths per second).
    pub v_max: f64,
    #[serde(default = "default_tau_act")]
    pub tau_act: f64,
    #[serde(default = "default_tau_deact")]
    pub tau_deact: f64,
}

fn default_tau_act() -> f64 {
    0.010
}

fn default_tau_deact() -> f64 {
    0.040
}

impl MuscleParams {
    pub fn new(f_max: f64, l_opt: f64, v_max: f64) -> Result<Self> {
        let p = MuscleParams {
            f_max,
            l_opt,
            v_max,
            tau_act: default_tau_act(),
            tau_deact: default_tau_deact(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("f_max", self.f_max),
            ("l_opt", self.l_opt),
            ("v_max", self.v_max),
            ("tau_act", self.tau_act),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(format!("muscle {name} must be > 0, got {v}")));
            }
        }
        if !(self.tau_deact.is_finite() && self.tau_deact >= self.tau_act) {
            return Err(Error::param(format!(
                "muscle tau_deact ({}) must be >= tau_act ({})",
                self.tau_deact, self.tau_act
            )));
        }
        Ok(())
    }
}

impl Default for MuscleParams {
    fn default() -> Self {
        MuscleParams {
            f_max: 100.0,
            l_opt: 0.1,
            v_max: 10.0,
            tau_act: default_tau_act(),
            tau_deact: default_tau_deact(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MuscleState {
    /// Activation in `[0, 1]`.
    pub act: f64,
    /// Fiber length over `l_opt`.
    pub l_norm: f64,
    /// Fiber velocity over `l_opt * v_max`; negative when shortening.
    pub v_norm: f64,
    /// Tension (N).
    pub force: f64,
}

impl MuscleState {
    pub fn at_rest(l_norm: f64) -> Self {
        MuscleState {
            act: 0.0,
            l_norm,
            v_norm: 0.0,
            force: 0.0,
        }
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in [0, 1], got {v}")))
    }
}

/// Time constant of the activation filter at the given operating point.
pub fn time_constant(ctrl: f64, act: f64, params: &MuscleParams) -> f64 {
    if ctrl > act {
        params.tau_act * (0.5 + 1.5 * act)
    } else {
        params.tau_deact / (0.5 + 1.5 * act)
    }
}

/// Rate of change of activation (1/s).
pub fn activation_derivative(ctrl: f64, act: f64, params: &MuscleParams) -> Result<f64> {
    check_unit("ctrl", ctrl)?;
    check_unit("act", act)?;
    Ok((ctrl - act) / time_constant(ctrl, act, params))
}

/// Advances activation over `dt` under constant excitation.
///
/// The filter is separable on each branch, and for constant `ctrl` the
/// activation never crosses `ctrl`, so the branch is fixed for the whole
/// step. The deactivation branch has a closed form; the activation branch
/// reduces to a scalar convex root problem solved by Newton iteration.
pub fn activation_step(ctrl: f64, act: f64, params: &MuscleParams, dt: f64) -> Result<f64> {
    check_unit("ctrl", ctrl)?;
    check_unit("act", act)?;
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(Error::domain(format!(
            "activation step must lie in (0, {MAX_STEP}], got {dt}"
        )));
    }
    let next = if ctrl > act {
        rise(ctrl, act, dt / params.tau_act)
    } else if ctrl < act {
        decay(ctrl, act, dt / params.tau_deact)
    } else {
        act
    };
    Ok(next.clamp(0.0, 1.0))
}

/// Activation branch. With `s = ln((c - a0) / (c - a))` the elapsed
/// normalized time is `K s - 1.5 D (1 - e^-s)`, `K = 0.5 + 1.5c`, `D = c - a0`.
/// That function is increasing and convex in `s`, so Newton from `s = 0`
/// overshoots once and then converges monotonically.
fn rise(c: f64, a0: f64, elapsed: f64) -> f64 {
    let k = 0.5 + 1.5 * c;
    let d = c - a0;
    let mut s = 0.0_f64;
    for _ in 0..60 {
        let e = (-s).exp();
        let f = k * s - 1.5 * d * (1.0 - e) - elapsed;
        let df = k - 1.5 * d * e;
        let next = s - f / df;
        if (next - s).abs() <= 1e-15 * next.abs().max(1.0) {
            s = next;
            break;
        }
        s = next;
    }
    c - d * (-s).exp()
}

/// Deactivation branch: `Y = (0.5 + 1.5a) / (a - c)` grows as
/// `exp(K t / tau_deact)`, inverted here through `1 / Y` to avoid overflow.
fn decay(c: f64, a0: f64, elapsed: f64) -> f64 {
    let k = 0.5 + 1.5 * c;
    let y_inv = (a0 - c) / (0.5 + 1.5 * a0) * (-k * elapsed).exp();
    (0.5 * y_inv + c) / (1.0 - 1.5 * y_inv)
}

/// Active force-length curve: Gaussian of width [`FL_WIDTH`] centred on 1.
pub fn force_length_active(l_norm: f64) -> f64 {
    let x = l_norm - 1.0;
    (-(x * x) / (FL_WIDTH * FL_WIDTH)).exp()
}

/// Force-velocity curve. Hill hyperbola on shortening (`v < 0`), zero at or
/// beyond maximum shortening velocity, saturating towards 1.5 on lengthening.
pub fn force_velocity(v_norm: f64) -> f64 {
    if v_norm <= -1.0 {
        0.0
    } else if v_norm <= 0.0 {
        (1.0 + v_norm) / (1.0 - v_norm / FV_SHORTEN_CURVATURE)
    } else {
        1.0 + (FV_LENGTHEN_MAX - 1.0) * v_norm / (v_norm + FV_SHORTEN_CURVATURE)
    }
}

/// Passive elastic force: zero up to optimal length, exponential beyond.
pub fn passive_force(l_norm: f64) -> f64 {
    if l_norm <= 1.0 {
        0.0
    } else {
        FP_AT_STRAIN * ((FP_SHAPE * (l_norm - 1.0)).exp() - 1.0)
            / ((FP_SHAPE * FP_STRAIN).exp() - 1.0)
    }
}

/// Tension produced by a muscle in the given state (N). Never negative.
pub fn muscle_force(state: &MuscleState, params: &MuscleParams) -> f64 {
    let active = force_length_active(state.l_norm) * force_velocity(state.v_norm) * state.act;
    (params.f_max * (active + passive_force(state.l_norm))).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn defaults() -> MuscleParams {
        MuscleParams::default()
    }

    /// Fine-step explicit Euler on the raw filter.
    fn reference(ctrl: f64, act0: f64, horizon: f64, h: f64) -> f64 {
        let p = defaults();
        let mut a = act0;
        let n = (horizon / h).round() as usize;
        for _ in 0..n {
            a += h * (ctrl - a) / time_constant(ctrl, a, &p);
        }
        a
    }

    #[test]
    fn derivative_examples() {
        let p = defaults();
        assert_eq!(activation_derivative(0.5, 0.5, &p).unwrap(), 0.0);
        assert_relative_eq!(activation_derivative(1.0, 0.0, &p).unwrap(), 200.0, epsilon = 1e-9);
        assert_relative_eq!(activation_derivative(0.0, 1.0, &p).unwrap(), -50.0, epsilon = 1e-9);
    }

    #[test]
    fn derivative_rejects_out_of_range() {
        let p = defaults();
        assert!(matches!(activation_derivative(1.2, 0.0, &p), Err(Error::Domain(_))));
        assert!(matches!(activation_derivative(0.5, -0.1, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn step_examples() {
        let p = defaults();
        assert_eq!(activation_step(0.3, 0.3, &p, 0.01).unwrap(), 0.3);
        assert_eq!(activation_step(0.0, 0.0, &p, 0.01).unwrap(), 0.0);
        let fine = reference(1.0, 0.0, 0.01, 1e-6);
        let got = activation_step(1.0, 0.0, &p, 0.01).unwrap();
        assert!((got - fine).abs() < 1e-3, "{got} vs {fine}");
        // Closed form of the rise from zero: t / tau_act = -1.5 a - 2 ln(1 - a).
        let implicit = -1.5 * got - 2.0 * (1.0 - got).ln();
        assert_relative_eq!(implicit, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn step_rejects_bad_dt() {
        let p = defaults();
        assert!(activation_step(0.5, 0.1, &p, 0.0).is_err());
        assert!(activation_step(0.5, 0.1, &p, 0.02).is_err());
    }

    #[test]
    fn rise_is_faster_than_decay() {
        let p = defaults();
        let dt = 0.001;
        let time_to = |ctrl: f64, start: f64, done: &dyn Fn(f64) -> bool| {
            let mut a = start;
            let mut n = 0;
            while !done(a) {
                a = activation_step(ctrl, a, &p, dt).unwrap();
                n += 1;
            }
            n
        };
        let up = time_to(1.0, 0.0, &|a| a >= 0.95);
        let down = time_to(0.0, 1.0, &|a| a <= 0.05);
        assert!(up < down, "rise {up} steps, decay {down} steps");
    }

    #[test]
    fn curve_examples() {
        assert_eq!(force_length_active(1.0), 1.0);
        assert!(force_length_active(0.2) < 0.05);
        assert!(force_length_active(0.21) < 0.05 && force_length_active(1.79) < 0.05);
        assert_relative_eq!(force_length_active(1.15), (-(0.15f64.powi(2)) / 0.2025).exp(), epsilon = 1e-15);
        assert_relative_eq!(force_length_active(1.15), 0.8948, epsilon = 1e-4);

        assert_eq!(force_velocity(0.0), 1.0);
        assert_eq!(force_velocity(-1.0), 0.0);
        assert_eq!(force_velocity(-3.0), 0.0);
        assert_relative_eq!(force_velocity(0.5), 1.0 + 0.5 * 0.5 / 0.75, epsilon = 1e-15);
        assert!(force_velocity(1e6) <= 1.5);

        assert_eq!(passive_force(0.9), 0.0);
        assert_eq!(passive_force(1.0), 0.0);
        assert_relative_eq!(passive_force(1.3), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn force_examples() {
        let p = defaults();
        let s = |act, l_norm, v_norm| MuscleState { act, l_norm, v_norm, force: 0.0 };
        assert_eq!(muscle_force(&s(0.0, 1.0, 0.7), &p), 0.0);
        assert_eq!(muscle_force(&s(1.0, 1.0, 0.0), &p), p.f_max);
        let expected = p.f_max
            * ((-(0.2f64 * 0.2) / 0.2025).exp() * (0.7 / 2.2) * 0.5
                + 0.5 * ((1.0f64).exp() - 1.0) / (1.5f64.exp() - 1.0));
        assert_relative_eq!(muscle_force(&s(0.5, 1.2, -0.3), &p), expected, epsilon = 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(MuscleParams::new(0.0, 0.1, 10.0).is_err());
        let mut p = defaults();
        p.tau_deact = 0.005;
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn converges_without_overshoot(ctrl in 0.0..=1.0f64, act in 0.0..=1.0f64, dt in 1e-4..=0.01f64) {
            let p = defaults();
            let mut a = act;
            for _ in 0..200 {
                let next = activation_step(ctrl, a, &p, dt).unwrap();
                prop_assert!((0.0..=1.0).contains(&next));
                prop_assert!((next - ctrl).abs() <= (a - ctrl).abs() + 1e-15);
                prop_assert!((next - ctrl) * (a - ctrl) >= 0.0);
                a = next;
            }
        }

        #[test]
        fn force_is_pull_only(act in 0.0..=1.0f64, l in 0.05..3.0f64, v in -5.0..5.0f64) {
            let st = MuscleState { act, l_norm: l, v_norm: v, force: 0.0 };
            prop_assert!(muscle_force(&st, &defaults()) >= 0.0);
        }

        #[test]
        fn force_velocity_monotone(a in -2.0..2.0f64, b in -2.0..2.0f64) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(force_velocity(lo) <= force_velocity(hi));
        }
    }
}
