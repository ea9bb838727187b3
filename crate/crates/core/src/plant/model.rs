use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::muscle::MuscleParams;

/// Coordinate frame a point is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    Ground,
    Link(usize),
}

/// One rigid link and the revolute joint connecting it to its parent.
#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub name: String,
    /// Parent link; `None` attaches the joint to ground.
    pub parent: Option<usize>,
    /// Joint position in the parent frame (world coordinates for roots).
    pub origin: [f64; 2],
    /// Fixed angular offset of the link frame relative to its parent (rad).
    pub angle_offset: f64,
    pub mass: f64,
    pub length: f64,
    /// Centre of mass along the link axis (m).
    pub com: f64,
    /// Rotational inertia about the centre of mass (kg m^2).
    pub inertia: f64,
    /// Viscous joint damping (N m s / rad).
    pub damping: f64,
    /// Joint angle limits `[lo, hi]` (rad).
    pub limits: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViaPoint {
    pub frame: Frame,
    pub point: [f64; 2],
}

/// Path of one muscle-tendon unit and its contractile parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Muscle {
    pub name: String,
    pub path: Vec<ViaPoint>,
    /// Path length at which the fiber length is zero (m); fiber length is
    /// `path_length - tendon_slack`.
    pub tendon_slack: f64,
    pub params: MuscleParams,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EndEffector {
    pub link: usize,
    pub point: [f64; 2],
}

/// Immutable description of a planar tendon-driven linkage.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub name: String,
    pub links: Vec<Link>,
    pub muscles: Vec<Muscle>,
    pub gravity: [f64; 2],
    pub end_effector: Option<EndEffector>,
    /// Configuration used by `initial_state` (rad).
    pub home: Vec<f64>,
}

/// Serializable form of [`Model`] used by model files. Frames and parents are
/// referred to by link name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub gravity: [f64; 2],
    #[serde(default)]
    pub home: Option<Vec<f64>>,
    pub links: Vec<LinkSpec>,
    pub muscles: Vec<MuscleSpec>,
    #[serde(default)]
    pub end_effector: Option<EndEffectorSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub name: String,
    #[serde(default)]
    pub parent: Option<String>,
    /// Defaults to the parent's tip, or the world origin for roots.
    #[serde(default)]
    pub origin: Option<[f64; 2]>,
    #[serde(default)]
    pub angle_offset: f64,
    pub mass: f64,
    pub length: f64,
    pub com: f64,
    pub inertia: f64,
    #[serde(default)]
    pub damping: f64,
    pub limits: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViaPointSpec {
    /// Link name, or `"ground"`.
    pub frame: String,
    pub point: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuscleSpec {
    pub name: String,
    pub tendon_slack: f64,
    pub params: MuscleParams,
    pub path: Vec<ViaPointSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndEffectorSpec {
    pub link: String,
    pub point: [f64; 2],
}

pub const GROUND: &str = "ground";

impl Model {
    pub fn n_joints(&self) -> usize {
        self.links.len()
    }

    pub fn n_muscles(&self) -> usize {
        self.muscles.len()
    }

    pub fn muscle_names(&self) -> Vec<String> {
        self.muscles.iter().map(|m| m.name.clone()).collect()
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    /// Checks every structural invariant of the model.
    pub fn validate(&self) -> Result<()> {
        if self.links.is_empty() {
            return Err(Error::param("model needs at least one link"));
        }
        for (k, link) in self.links.iter().enumerate() {
            let ctx = |what: &str| Error::param(format!("link `{}`: {what}", link.name));
            if let Some(p) = link.parent {
                if p >= k {
                    return Err(ctx("parent must precede the link"));
                }
            }
            let positive = [link.mass, link.length, link.inertia];
            if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(ctx("mass, length and inertia must be > 0"));
            }
            if !(link.damping.is_finite() && link.damping >= 0.0) {
                return Err(ctx("damping must be >= 0"));
            }
            if !(link.limits[0] < link.limits[1]) {
                return Err(ctx("limits must satisfy lo < hi"));
            }
            if !link.com.is_finite() || link.origin.iter().any(|v| !v.is_finite()) {
                return Err(ctx("non-finite geometry"));
            }
        }
        let names: std::collections::HashSet<_> = self.links.iter().map(|l| &l.name).collect();
        if names.len() != self.links.len() {
            return Err(Error::param("link names must be unique"));
        }
        for m in &self.muscles {
            if m.path.len() < 2 {
                return Err(Error::param(format!(
                    "muscle `{}` needs at least two via-points",
                    m.name
                )));
            }
            for v in &m.path {
                if let Frame::Link(k) = v.frame {
                    if k >= self.links.len() {
                        return Err(Error::param(format!("muscle `{}`: bad frame", m.name)));
                    }
                }
            }
            m.params
                .validate()
                .map_err(|e| Error::param(format!("muscle `{}`: {e}", m.name)))?;
            if !m.tendon_slack.is_finite() {
                return Err(Error::param(format!("muscle `{}`: bad tendon_slack", m.name)));
            }
        }
        if let Some(ee) = &self.end_effector {
            if ee.link >= self.links.len() {
                return Err(Error::param("end effector link out of range"));
            }
        }
        if self.home.len() != self.links.len() {
            return Err(Error::param("home configuration length must equal joint count"));
        }
        for (q, l) in self.home.iter().zip(&self.links) {
            if !(*q >= l.limits[0] && *q <= l.limits[1]) {
                return Err(Error::param(format!(
                    "home angle {q} of `{}` outside limits",
                    l.name
                )));
            }
        }
        Ok(())
    }

    /// Mirror image of the model through the link-frame x axes: every `y`
    /// coordinate, angle offset and joint angle changes sign.
    pub fn mirrored(&self, suffix: &str) -> Model {
        let flip = |p: [f64; 2]| [p[0], -p[1]];
        Model {
            name: format!("{}{}", self.name, suffix),
            links: self
                .links
                .iter()
                .map(|l| Link {
                    name: format!("{}{}", l.name, suffix),
                    origin: flip(l.origin),
                    angle_offset: -l.angle_offset,
                    limits: [-l.limits[1], -l.limits[0]],
                    ..l.clone()
                })
                .collect(),
            muscles: self
                .muscles
                .iter()
                .map(|m| Muscle {
                    name: format!("{}{}", m.name, suffix),
                    path: m
                        .path
                        .iter()
                        .map(|v| ViaPoint {
                            frame: v.frame,
                            point: flip(v.point),
                        })
                        .collect(),
                    ..m.clone()
                })
                .collect(),
            gravity: flip(self.gravity),
            end_effector: self.end_effector.map(|e| EndEffector {
                link: e.link,
                point: flip(e.point),
            }),
            home: self.home.iter().map(|q| -q).collect(),
        }
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Model> {
        let index_of = |name: &str| -> Result<usize> {
            spec.links
                .iter()
                .position(|l| l.name == name)
                .ok_or_else(|| Error::Lookup {
                    kind: "link",
                    name: name.to_string(),
                })
        };
        let frame_of = |name: &str| -> Result<Frame> {
            if name == GROUND {
                Ok(Frame::Ground)
            } else {
                index_of(name).map(Frame::Link)
            }
        };
        let mut links = Vec::with_capacity(spec.links.len());
        for l in &spec.links {
            let parent = l.parent.as_deref().map(index_of).transpose()?;
            let origin = match (l.origin, parent) {
                (Some(o), _) => o,
                (None, Some(p)) => [spec.links[p].length, 0.0],
                (None, None) => [0.0, 0.0],
            };
            links.push(Link {
                name: l.name.clone(),
                parent,
                origin,
                angle_offset: l.angle_offset,
                mass: l.mass,
                length: l.length,
                com: l.com,
                inertia: l.inertia,
                damping: l.damping,
                limits: l.limits,
            });
        }
        let mut muscles = Vec::with_capacity(spec.muscles.len());
        for m in &spec.muscles {
            let path = m
                .path
                .iter()
                .map(|v| {
                    Ok(ViaPoint {
                        frame: frame_of(&v.frame)?,
                        point: v.point,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            muscles.push(Muscle {
                name: m.name.clone(),
                path,
                tendon_slack: m.tendon_slack,
                params: m.params,
            });
        }
        let end_effector = spec
            .end_effector
            .as_ref()
            .map(|e| {
                Ok::<_, Error>(EndEffector {
                    link: index_of(&e.link)?,
                    point: e.point,
                })
            })
            .transpose()?;
        let model = Model {
            name: spec.name.clone(),
            home: spec.home.clone().unwrap_or_else(|| vec![0.0; links.len()]),
            links,
            muscles,
            gravity: spec.gravity,
            end_effector,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn to_spec(&self) -> ModelSpec {
        let frame_name = |f: Frame| match f {
            Frame::Ground => GROUND.to_string(),
            Frame::Link(k) => self.links[k].name.clone(),
        };
        ModelSpec {
            name: self.name.clone(),
            gravity: self.gravity,
            home: Some(self.home.clone()),
            links: self
                .links
                .iter()
                .map(|l| LinkSpec {
                    name: l.name.clone(),
                    parent: l.parent.map(|p| self.links[p].name.clone()),
                    origin: Some(l.origin),
                    angle_offset: l.angle_offset,
                    mass: l.mass,
                    length: l.length,
                    com: l.com,
                    inertia: l.inertia,
                    damping: l.damping,
                    limits: l.limits,
                })
                .collect(),
            muscles: self
                .muscles
                .iter()
                .map(|m| MuscleSpec {
                    name: m.name.clone(),
                    tendon_slack: m.tendon_slack,
                    params: m.params,
                    path: m
                        .path
                        .iter()
                        .map(|v| ViaPointSpec {
                            frame: frame_name(v.frame),
                            point: v.point,
                        })
                        .collect(),
                })
                .collect(),
            end_effector: self.end_effector.map(|e| EndEffectorSpec {
                link: self.links[e.link].name.clone(),
                point: e.point,
            }),
        }
    }
}
