//! Predictive haptic loop: proxy spheres against the latest mesh snapshot.

pub mod arm;
pub mod bvh;

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use arc_swap::ArcSwapOption;
use thiserror::Error;

use crate::geometry::Vec3;
use crate::mesh::SurfaceMesh;
pub use arm::{ArmError, ArmModel, ArmState, JointKind, Sphere};
pub use bvh::{Bvh, Nearest, Proximity};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HapticParams {
    /// Guard distance at which contact is reported (meters).
    pub min_depth: f64,
    /// Constant force magnitude (Newtons).
    pub force: f64,
    pub rate_hz: f64,
}

impl Default for HapticParams {
    fn default() -> Self {
        HapticParams { min_depth: 0.020, force: 10.0, rate_hz: 250.0 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("haptics field `{0}`: {1}")]
    Invalid(&'static str, String),
}

impl HapticParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.min_depth >= 0.0) || !self.min_depth.is_finite() {
            return Err(ParamError::Invalid("min_depth", format!("must be >= 0, got {}", self.min_depth)));
        }
        if !(self.rate_hz > 0.0) || !self.rate_hz.is_finite() {
            return Err(ParamError::Invalid("rate_hz", format!("must be > 0, got {}", self.rate_hz)));
        }
        if !self.force.is_finite() || self.force < 0.0 {
            return Err(ParamError::Invalid("force", format!("must be >= 0, got {}", self.force)));
        }
        Ok(())
    }

    pub fn tick(&self) -> f64 {
        1.0 / self.rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactEvent {
    pub proxy: usize,
    pub triangle: u32,
    pub witness: Vec3,
    /// Proxy surface to triangle; negative means penetration.
    pub gap: f64,
    pub normal: Vec3,
    pub force: Vec3,
    pub mesh_version: u64,
    pub timestamp: f64,
}

impl ContactEvent {
    pub fn has_force(&self) -> bool {
        self.force != Vec3::zeros()
    }
}

/// Immutable mesh plus its BVH, swapped in as a unit.
#[derive(Debug)]
pub struct HapticSnapshot {
    pub mesh: Arc<SurfaceMesh>,
    pub bvh: Bvh,
}

impl HapticSnapshot {
    pub fn new(mesh: Arc<SurfaceMesh>) -> Self {
        let bvh = Bvh::build(&mesh);
        HapticSnapshot { mesh, bvh }
    }

    pub fn version(&self) -> u64 {
        self.mesh.version
    }
}

/// One step of the loop for every proxy of `model` at `state`.
/// Contact (force) at gap ≤ min_depth, a zero-force proximity event up to
/// 2·min_depth, nothing beyond. No snapshot or an empty mesh gives no events.
pub fn haptic_step(
    model: &ArmModel,
    state: &ArmState,
    snapshot: Option<&HapticSnapshot>,
    params: &HapticParams,
) -> Result<Vec<ContactEvent>, ArmError> {
    let Some(snap) = snapshot else { return Ok(Vec::new()) };
    let spheres = model.forward_kinematics(&state.positions)?;
    Ok(step_spheres(&spheres, &snap.bvh, params, state.timestamp))
}

pub fn step_spheres(spheres: &[Sphere], bvh: &Bvh, params: &HapticParams, timestamp: f64) -> Vec<ContactEvent> {
    let mut out = Vec::new();
    for (i, s) in spheres.iter().enumerate() {
        let Proximity::Nearest { nearest, gap } = bvh.query_proximity(&s.center, s.radius) else {
            return Vec::new();
        };
        let force = if gap <= params.min_depth {
            nearest.normal * params.force
        } else if gap <= 2.0 * params.min_depth {
            Vec3::zeros()
        } else {
            continue;
        };
        out.push(ContactEvent {
            proxy: i,
            triangle: nearest.triangle,
            witness: nearest.witness,
            gap,
            normal: nearest.normal,
            force,
            mesh_version: bvh.version(),
            timestamp,
        });
    }
    out
}

#[derive(Debug, Error, PartialEq)]
pub enum PublishError {
    #[error("mesh version {offered} is not newer than current {current}")]
    Stale { offered: u64, current: u64 },
}

/// Atomic-swap handoff between the reconstruction side and the haptic loop.
/// Readers never lock; publishers serialize among themselves.
#[derive(Default)]
pub struct SnapshotCell {
    current: ArcSwapOption<HapticSnapshot>,
    publish: Mutex<()>,
}

impl SnapshotCell {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(&self) -> Option<Arc<HapticSnapshot>> {
        self.current.load_full()
    }

    pub fn version(&self) -> Option<u64> {
        self.current.load().as_ref().map(|s| s.version())
    }

    /// Builds the BVH and swaps it in; returns the time spent.
    pub fn publish(&self, mesh: Arc<SurfaceMesh>) -> Result<Duration, PublishError> {
        let t0 = Instant::now();
        let _guard = self.publish.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(cur) = self.version() {
            if mesh.version <= cur {
                log::warn!("rejected stale mesh version {} (current {cur})", mesh.version);
                return Err(PublishError::Stale { offered: mesh.version, current: cur });
            }
        }
        let snap = Arc::new(HapticSnapshot::new(mesh));
        self.current.store(Some(snap));
        Ok(t0.elapsed())
    }
}
