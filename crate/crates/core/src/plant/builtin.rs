//! Reference models shipped with the library.
//!
//! Both arms move in a horizontal plane (a desk top), so in-plane gravity is
//! zero. Angles are measured counter-clockwise; flexors sit on the `+y` side
//! of each link and shorten as their joint angle grows.

use super::kinematics::muscle_lengths;
use super::model::{EndEffector, Frame, Link, Model, Muscle, ViaPoint};
use crate::error::{Error, Result};
use crate::muscle::MuscleParams;

/// Normalized fiber length at the short and long ends of a muscle's range.
const L_NORM_RANGE: [f64; 2] = [0.7, 1.05];
const GRID: usize = 41;

pub fn builtin_names() -> &'static [&'static str] {
    &["arm2x6", "arm2x6-mirrored"]
}

pub fn builtin_model(name: &str) -> Result<Model> {
    let model = match name {
        "arm2x6" => arm2x6("", [0.0, 0.0]),
        "arm2x6-mirrored" => {
            let left = arm2x6("a_", [0.0, 0.25]);
            let right = arm2x6("b_", [0.0, 0.25]).mirrored("");
            join(name, left, right)
        }
        _ => {
            return Err(Error::Lookup {
                kind: "model",
                name: name.to_string(),
            })
        }
    };
    model.validate()?;
    Ok(model)
}

fn arm2x6(prefix: &str, base: [f64; 2]) -> Model {
    let link = |name: &str, parent, origin, mass: f64| Link {
        name: format!("{prefix}{name}"),
        parent,
        origin,
        angle_offset: 0.0,
        mass,
        length: 0.3,
        com: 0.15,
        inertia: mass * 0.3 * 0.3 / 12.0,
        damping: 0.05,
        limits: [-1.2, 1.2],
    };
    let links = vec![link("upper", None, base, 1.0), link("fore", Some(0), [0.3, 0.0], 0.8)];

    let g = |x, y| ViaPoint {
        frame: Frame::Ground,
        point: [base[0] + x, base[1] + y],
    };
    let on = |k, x, y| ViaPoint {
        frame: Frame::Link(k),
        point: [x, y],
    };
    let flip = |path: &[ViaPoint]| -> Vec<ViaPoint> {
        path.iter()
            .map(|v| match v.frame {
                Frame::Ground => ViaPoint {
                    frame: Frame::Ground,
                    point: [v.point[0], 2.0 * base[1] - v.point[1]],
                },
                Frame::Link(_) => ViaPoint {
                    frame: v.frame,
                    point: [v.point[0], -v.point[1]],
                },
            })
            .collect()
    };
    let shoulder = vec![g(-0.10, 0.04), g(0.0, 0.04), on(0, 0.12, 0.03)];
    let elbow = vec![on(0, 0.15, 0.03), on(0, 0.30, 0.03), on(1, 0.10, 0.025)];
    let biarticular = vec![g(-0.10, 0.05), g(0.0, 0.05), on(0, 0.30, 0.035), on(1, 0.08, 0.025)];

    let muscle = |name: &str, path: Vec<ViaPoint>, f_max: f64| Muscle {
        name: format!("{prefix}{name}"),
        path,
        tendon_slack: 0.0,
        params: MuscleParams {
            f_max,
            ..MuscleParams::default()
        },
    };
    let muscles = vec![
        muscle("shoulder_flexor", shoulder.clone(), 100.0),
        muscle("shoulder_extensor", flip(&shoulder), 100.0),
        muscle("elbow_flexor", elbow.clone(), 80.0),
        muscle("elbow_extensor", flip(&elbow), 80.0),
        muscle("biarticular_flexor", biarticular.clone(), 60.0),
        muscle("biarticular_extensor", flip(&biarticular), 60.0),
    ];
    let mut model = Model {
        name: format!("{prefix}arm2x6"),
        links,
        muscles,
        gravity: [0.0, 0.0],
        end_effector: Some(EndEffector {
            link: 1,
            point: [0.3, 0.0],
        }),
        home: vec![0.0, 0.5],
    };
    calibrate_muscles(&mut model);
    model
}

/// Places two independent models side by side in one.
fn join(name: &str, a: Model, b: Model) -> Model {
    let shift = a.links.len();
    let mut links = a.links;
    links.extend(b.links.into_iter().map(|l| Link {
        parent: l.parent.map(|p| p + shift),
        ..l
    }));
    let mut muscles = a.muscles;
    muscles.extend(b.muscles.into_iter().map(|m| Muscle {
        path: m
            .path
            .into_iter()
            .map(|v| ViaPoint {
                frame: match v.frame {
                    Frame::Ground => Frame::Ground,
                    Frame::Link(k) => Frame::Link(k + shift),
                },
                ..v
            })
            .collect(),
        ..m
    }));
    let mut home = a.home;
    home.extend(b.home);
    Model {
        name: name.to_string(),
        links,
        muscles,
        gravity: a.gravity,
        end_effector: a.end_effector,
        home,
    }
}

/// Sets each muscle's `l_opt` and `tendon_slack` so that its normalized fiber
/// length spans `[0.7, 1.05]` over a dense grid of the joint space.
pub fn calibrate_muscles(model: &mut Model) {
    let n = model.n_joints();
    let total = GRID.pow(n as u32);
    let mut lo = vec![f64::INFINITY; model.n_muscles()];
    let mut hi = vec![f64::NEG_INFINITY; model.n_muscles()];
    let mut q = vec![0.0; n];
    for idx in 0..total {
        let mut rem = idx;
        for (j, link) in model.links.iter().enumerate() {
            let [a, b] = link.limits;
            q[j] = a + (b - a) * (rem % GRID) as f64 / (GRID - 1) as f64;
            rem /= GRID;
        }
        for (i, len) in muscle_lengths(model, &q).into_iter().enumerate() {
            lo[i] = lo[i].min(len);
            hi[i] = hi[i].max(len);
        }
    }
    let span = L_NORM_RANGE[1] - L_NORM_RANGE[0];
    for (i, m) in model.muscles.iter_mut().enumerate() {
        let l_opt = (hi[i] - lo[i]) / span;
        m.params.l_opt = l_opt;
        m.tendon_slack = lo[i] - L_NORM_RANGE[0] * l_opt;
    }
}
