//! Surface-accuracy metrics and report formatting.
//!
//! Precision: share of points sampled uniformly by area on the
//! reconstruction that lie within `tau` of the ground truth. Completeness:
//! the same with the roles swapped.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::contact::bvh::{usable, Bvh};
use crate::contact::{haptic_step, ArmModel, ArmState, HapticParams, HapticSnapshot};
use crate::geometry::{triangle_area, Vec3};
use crate::mesh::SurfaceMesh;
use crate::par::{self, ExecPolicy};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{0} mesh is empty")]
    EmptyMesh(&'static str),
    #[error("tau must be > 0, got {0}")]
    BadTau(f64),
    #[error("sample count must be > 0")]
    NoSamples,
    #[error("missing input: {0}")]
    Missing(&'static str),
}

pub const DEFINITION: &str =
    "precision/completeness = % of area-uniform samples within tau of the other surface (threshold definition, not RMS)";

/// `n` points uniformly distributed by area; deterministic in `seed`.
/// Zero-area triangles are never chosen.
pub fn sample_surface(mesh: &SurfaceMesh, n: usize, seed: u64) -> Vec<Vec3> {
    let mut cum = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for i in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(i);
        if usable(mesh, i) {
            total += triangle_area(a, b, c);
        }
        cum.push(total);
    }
    if total <= 0.0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = rng.gen_range(0.0..total);
            let i = cum.partition_point(|&c| c <= x).min(cum.len() - 1);
            let [a, b, c] = mesh.triangle(i);
            let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
            let s = r1.sqrt();
            a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2)
        })
        .collect()
}

/// Distance from each point to the closest triangle of `bvh`.
pub fn distances(points: &[Vec3], bvh: &Bvh, policy: ExecPolicy) -> Vec<f64> {
    par::map(policy, points, |p| bvh.nearest(p).map_or(f64::INFINITY, |n| n.distance))
}

fn check(from: &SurfaceMesh, to: &SurfaceMesh, names: (&'static str, &'static str), tau: f64, n: usize) -> Result<(), EvalError> {
    if from.is_empty() {
        return Err(EvalError::EmptyMesh(names.0));
    }
    if to.is_empty() {
        return Err(EvalError::EmptyMesh(names.1));
    }
    if !(tau > 0.0) {
        return Err(EvalError::BadTau(tau));
    }
    if n == 0 {
        return Err(EvalError::NoSamples);
    }
    Ok(())
}

fn within(from: &SurfaceMesh, to: &SurfaceMesh, tau: f64, n: usize, seed: u64) -> f64 {
    let samples = sample_surface(from, n, seed);
    if samples.is_empty() {
        return 0.0;
    }
    let bvh = Bvh::build(to);
    let d = distances(&samples, &bvh, ExecPolicy::default());
    let hits = d.iter().filter(|&&x| x <= tau).count();
    100.0 * hits as f64 / samples.len() as f64
}

pub fn precision(recon: &SurfaceMesh, gt: &SurfaceMesh, tau: f64, n: usize, seed: u64) -> Result<f64, EvalError> {
    check(recon, gt, ("recon", "gt"), tau, n)?;
    Ok(within(recon, gt, tau, n, seed))
}

pub fn completeness(recon: &SurfaceMesh, gt: &SurfaceMesh, tau: f64, n: usize, seed: u64) -> Result<f64, EvalError> {
    check(recon, gt, ("recon", "gt"), tau, n)?;
    Ok(within(gt, recon, tau, n, seed))
}

/// (referenced vertices, faces).
pub fn mesh_stats(mesh: &SurfaceMesh) -> (usize, usize) {
    let mut used = vec![false; mesh.vertices.len()];
    for t in &mesh.triangles {
        for &v in t {
            used[v as usize] = true;
        }
    }
    (used.iter().filter(|&&u| u).count(), mesh.triangles.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimingSummary {
    pub keyframe_rate: f64,
    pub haptic_p99_ms: f64,
    pub export_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub vertices: usize,
    pub faces: usize,
    pub precision: f64,
    pub completeness: f64,
    pub tau: f64,
    pub samples: usize,
    pub seed: u64,
    pub timing: TimingSummary,
}

/// p99 wall time (ms) of `steps` haptic steps of `arm` against `mesh`, at
/// joint configurations drawn uniformly within the limits.
pub fn haptic_p99_ms(mesh: &SurfaceMesh, arm: &ArmModel, steps: usize, seed: u64) -> f64 {
    let snap = HapticSnapshot::new(Arc::new(mesh.clone()));
    let params = HapticParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times: Vec<f64> = (0..steps.max(1))
        .map(|k| {
            let q = arm.joints.iter().map(|j| rng.gen_range(j.limits.0..=j.limits.1)).collect();
            let s = ArmState { positions: q, velocities: vec![0.0; arm.num_joints()], timestamp: k as f64 * params.tick() };
            let t0 = Instant::now();
            let _ = haptic_step(arm, &s, Some(&snap), &params);
            t0.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[times.len() * 99 / 100] * 1e3
}

pub struct ReportInputs<'a> {
    pub recon: Option<&'a SurfaceMesh>,
    pub gt: Option<&'a SurfaceMesh>,
    pub timing: Option<TimingSummary>,
    pub tau: f64,
    pub samples: usize,
    pub seed: u64,
}

pub fn report(inputs: &ReportInputs) -> Result<MetricReport, EvalError> {
    let recon = inputs.recon.ok_or(EvalError::Missing("recon"))?;
    let gt = inputs.gt.ok_or(EvalError::Missing("gt"))?;
    let timing = inputs.timing.ok_or(EvalError::Missing("timing"))?;
    let (vertices, faces) = mesh_stats(recon);
    Ok(MetricReport {
        vertices,
        faces,
        precision: precision(recon, gt, inputs.tau, inputs.samples, inputs.seed)?,
        completeness: completeness(recon, gt, inputs.tau, inputs.samples, inputs.seed)?,
        tau: inputs.tau,
        samples: inputs.samples,
        seed: inputs.seed,
        timing,
    })
}

impl MetricReport {
    const COLUMNS: [&'static str; 10] = [
        "vertices",
        "faces",
        "precision_pct",
        "completeness_pct",
        "tau_m",
        "samples",
        "seed",
        "keyframe_rate_hz",
        "haptic_p99_ms",
        "export_ms",
    ];

    fn cells(&self) -> [String; 10] {
        [
            self.vertices.to_string(),
            self.faces.to_string(),
            format!("{:.2}", self.precision),
            format!("{:.2}", self.completeness),
            format!("{}", self.tau),
            self.samples.to_string(),
            self.seed.to_string(),
            format!("{:.2}", self.timing.keyframe_rate),
            format!("{:.3}", self.timing.haptic_p99_ms),
            format!("{:.2}", self.timing.export_ms),
        ]
    }

    /// Aligned text table with a definition line.
    pub fn table(&self) -> String {
        let cells = self.cells();
        let widths: Vec<usize> = Self::COLUMNS.iter().zip(&cells).map(|(h, c)| h.len().max(c.len())).collect();
        let mut s = format!("# {DEFINITION}\n");
        let row = |items: &mut dyn Iterator<Item = &str>| {
            items.zip(&widths).map(|(x, w)| format!("{x:>w$}")).collect::<Vec<_>>().join("  ")
        };
        let _ = writeln!(s, "{}", row(&mut Self::COLUMNS.iter().copied()));
        let _ = writeln!(s, "{}", row(&mut cells.iter().map(String::as_str)));
        s
    }

    pub fn csv(&self) -> String {
        format!("{}\n{}\n", Self::COLUMNS.join(","), self.cells().join(","))
    }
}

/// Deterministic 22,998-triangle tabletop: a 107×107 rippled sheet plus a
/// 5×10 grid lid, 2 m across. Used for the timing budgets.
pub fn reference_mesh() -> SurfaceMesh {
    let mut sheet = SurfaceMesh::grid(107, 107, 2.0, 0.0);
    for v in &mut sheet.vertices {
        v.x -= 1.0;
        v.y -= 1.0;
        v.z = 0.03 * (3.0 * v.x).sin() * (2.0 * v.y).cos();
    }
    let sheet = SurfaceMesh::from_triangles(0, sheet.vertices, sheet.triangles);
    let mut lid = SurfaceMesh::grid(5, 10, 0.5, 0.3);
    for v in &mut lid.vertices {
        v.x -= 0.25;
        v.y -= 0.25;
    }
    SurfaceMesh::merged(1, &[sheet, lid])
}
