//! Serial-chain arm model, forward kinematics and Cartesian jogging.
//!
//! Config schema (TOML):
//!
//! ```toml
//! name = "gantry"            # optional
//! base = [0.0, 0.0, 0.0]     # optional base translation
//!
//! [[joints]]                 # one table per joint, in chain order
//! kind = "revolute"          # or "prismatic"
//! axis = [0.0, 0.0, 1.0]     # in the joint frame, normalized on load
//! origin = [0.0, 0.0, 0.1]   # parent frame -> joint frame translation
//! limits = [-2.6, 2.6]       # radians or meters, lo <= hi
//!
//! [[proxies]]                # collision spheres, optional
//! link = 3                   # 0 = base, i = frame after joint i
//! center = [0.0, 0.0, 0.0]
//! radius = 0.05
//!
//! [end_effector]             # optional; defaults to the last link,
//! link = 7                   # zero offset and radius 0.05
//! center = [0.0, 0.0, 0.06]
//! radius = 0.05
//! ```
//!
//! The end effector is appended as the last proxy.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Isometry3, Translation3, Unit, UnitQuaternion};
use serde::Deserialize;
use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum ArmError {
    #[error("arm config: {0}")]
    Parse(String),
    #[error("arm config field `{field}`: {msg}")]
    Invalid { field: String, msg: String },
    #[error("expected {expected} joint values, got {got}")]
    WrongLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub kind: JointKind,
    pub axis: Unit<Vec3>,
    pub origin: Vec3,
    pub limits: (f64, f64),
}

impl Joint {
    /// Motion of the joint at value `q`.
    pub fn motion(&self, q: f64) -> Isometry3<f64> {
        match self.kind {
            JointKind::Revolute => Isometry3::from_parts(
                Translation3::identity(),
                UnitQuaternion::from_axis_angle(&self.axis, q),
            ),
            JointKind::Prismatic => Isometry3::from_parts(
                Translation3::from(self.axis.into_inner() * q),
                UnitQuaternion::identity(),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proxy {
    pub link: usize,
    pub center: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    pub name: String,
    pub base: Isometry3<f64>,
    pub joints: Vec<Joint>,
    /// Collision proxies; the end effector is last.
    pub proxies: Vec<Proxy>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ArmFile {
    name: Option<String>,
    base: Option<[f64; 3]>,
    joints: Vec<JointFile>,
    #[serde(default)]
    proxies: Vec<ProxyFile>,
    end_effector: Option<EndEffectorFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JointFile {
    kind: JointKind,
    axis: [f64; 3],
    #[serde(default)]
    origin: [f64; 3],
    limits: [f64; 2],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProxyFile {
    link: usize,
    #[serde(default)]
    center: [f64; 3],
    radius: f64,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct EndEffectorFile {
    link: Option<usize>,
    #[serde(default)]
    center: [f64; 3],
    radius: Option<f64>,
}

pub const DEFAULT_EE_RADIUS: f64 = 0.05;

const SEVEN_DOF: &str = include_str!("../../configs/arm_7dof.toml");
const GANTRY: &str = include_str!("../../configs/gantry.toml");

fn invalid(field: impl Into<String>, msg: impl Into<String>) -> ArmError {
    ArmError::Invalid { field: field.into(), msg: msg.into() }
}

impl ArmModel {
    pub fn from_toml_str(text: &str) -> Result<Self, ArmError> {
        let f: ArmFile = toml::from_str(text).map_err(|e| ArmError::Parse(e.to_string()))?;
        if f.joints.is_empty() {
            return Err(invalid("joints", "at least one joint is required"));
        }
        let n = f.joints.len();
        let mut joints = Vec::with_capacity(n);
        for (i, j) in f.joints.iter().enumerate() {
            let axis = Unit::try_new(Vec3::from(j.axis), 1e-12)
                .ok_or_else(|| invalid(format!("joints[{i}].axis"), "zero axis"))?;
            let [lo, hi] = j.limits;
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(invalid(format!("joints[{i}].limits"), format!("need finite lo <= hi, got [{lo}, {hi}]")));
            }
            joints.push(Joint { kind: j.kind, axis, origin: Vec3::from(j.origin), limits: (lo, hi) });
        }
        let mut proxies = Vec::new();
        for (i, p) in f.proxies.iter().enumerate() {
            if p.link > n {
                return Err(invalid(format!("proxies[{i}].link"), format!("{} > joint count {n}", p.link)));
            }
            if !(p.radius > 0.0) {
                return Err(invalid(format!("proxies[{i}].radius"), "must be > 0"));
            }
            proxies.push(Proxy { link: p.link, center: Vec3::from(p.center), radius: p.radius });
        }
        let ee = f.end_effector.unwrap_or_default();
        let link = ee.link.unwrap_or(n);
        if link > n {
            return Err(invalid("end_effector.link", format!("{link} > joint count {n}")));
        }
        let radius = ee.radius.unwrap_or(DEFAULT_EE_RADIUS);
        if !(radius > 0.0) {
            return Err(invalid("end_effector.radius", "must be > 0"));
        }
        proxies.push(Proxy { link, center: Vec3::from(ee.center), radius });
        Ok(ArmModel {
            name: f.name.unwrap_or_else(|| "arm".into()),
            base: Isometry3::from_parts(Translation3::from(Vec3::from(f.base.unwrap_or_default())), UnitQuaternion::identity()),
            joints,
            proxies,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ArmError> {
        let text = std::fs::read_to_string(path).map_err(|e| ArmError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn seven_dof() -> Self {
        Self::from_toml_str(SEVEN_DOF).expect("bundled config")
    }

    pub fn gantry() -> Self {
        Self::from_toml_str(GANTRY).expect("bundled config")
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn end_effector(&self) -> usize {
        self.proxies.len() - 1
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (x, j) in q.iter_mut().zip(&self.joints) {
            *x = x.clamp(j.limits.0, j.limits.1);
        }
    }

    fn check_len(&self, q: &[f64]) -> Result<(), ArmError> {
        if q.len() != self.joints.len() {
            return Err(ArmError::WrongLength { expected: self.joints.len(), got: q.len() });
        }
        Ok(())
    }

    /// World frames of links 0..=n.
    pub fn link_frames(&self, q: &[f64]) -> Result<Vec<Isometry3<f64>>, ArmError> {
        self.check_len(q)?;
        let mut frames = Vec::with_capacity(q.len() + 1);
        let mut t = self.base;
        frames.push(t);
        for (j, &x) in self.joints.iter().zip(q) {
            t = t * Translation3::from(j.origin) * j.motion(x);
            frames.push(t);
        }
        Ok(frames)
    }

    /// World-frame proxy spheres at configuration `q`.
    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Vec<Sphere>, ArmError> {
        let frames = self.link_frames(q)?;
        Ok(self
            .proxies
            .iter()
            .map(|p| Sphere { center: frames[p.link].transform_point(&p.center.into()).coords, radius: p.radius })
            .collect())
    }

    pub fn end_effector_position(&self, q: &[f64]) -> Result<Vec3, ArmError> {
        Ok(self.forward_kinematics(q)?[self.end_effector()].center)
    }

    /// 3×n positional Jacobian of the end-effector centre.
    pub fn jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>, ArmError> {
        let frames = self.link_frames(q)?;
        let ee = &self.proxies[self.end_effector()];
        let p = frames[ee.link].transform_point(&ee.center.into()).coords;
        let mut jac = DMatrix::zeros(3, q.len());
        for (i, j) in self.joints.iter().enumerate().take(ee.link) {
            let f = frames[i] * Translation3::from(j.origin);
            let axis = f.rotation * j.axis.into_inner();
            let col = match j.kind {
                JointKind::Revolute => axis.cross(&(p - f.translation.vector)),
                JointKind::Prismatic => axis,
            };
            jac.set_column(i, &col);
        }
        Ok(jac)
    }

    /// One damped-least-squares step moving the end effector by `dx`;
    /// the result is clamped to the joint limits.
    pub fn jog_cartesian(&self, q: &[f64], dx: &Vec3, damping: f64) -> Result<Vec<f64>, ArmError> {
        let j = self.jacobian(q)?;
        let jjt = &j * j.transpose() + DMatrix::identity(3, 3) * (damping * damping);
        let rhs = DVector::from_column_slice(dx.as_slice());
        let y = jjt.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(3));
        let dq = j.transpose() * y;
        let mut out: Vec<f64> = q.iter().zip(dq.iter()).map(|(a, b)| a + b).collect();
        self.clamp(&mut out);
        Ok(out)
    }

    pub fn jog_joints(&self, q: &[f64], dq: &[f64]) -> Result<Vec<f64>, ArmError> {
        self.check_len(q)?;
        self.check_len(dq)?;
        let mut out: Vec<f64> = q.iter().zip(dq).map(|(a, b)| a + b).collect();
        self.clamp(&mut out);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmState {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub timestamp: f64,
}

impl ArmState {
    /// Positions are clamped to the model's limits.
    pub fn new(model: &ArmModel, mut positions: Vec<f64>, velocities: Vec<f64>, timestamp: f64) -> Result<Self, ArmError> {
        model.check_len(&positions)?;
        model.check_len(&velocities)?;
        model.clamp(&mut positions);
        Ok(ArmState { positions, velocities, timestamp })
    }

    pub fn home(model: &ArmModel) -> Self {
        let mut positions = vec![0.0; model.num_joints()];
        model.clamp(&mut positions);
        ArmState { positions, velocities: vec![0.0; model.num_joints()], timestamp: 0.0 }
    }
}
