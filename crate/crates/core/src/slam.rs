//! Simulated SLAM front end.
//!
//! Stands in for a live tracker: produces keyframes, map points and
//! bundle-adjustment point moves either from a synthetic ray-cast scene or
//! from a recorded scene-stream file.
//!
//! Camera frame convention: x right, y down, z forward (right handed).
//! `Pose::rotation` maps camera-frame vectors to world frame and
//! `Pose::translation` is the camera centre in world coordinates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, Rotation3, Unit, UnitQuaternion};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::geometry::{barycentric_point, ray_triangle, Aabb, Vec3};
use crate::mesh::SurfaceMesh;

#[derive(Debug, Error)]
pub enum SlamError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown map point {id}")]
    DanglingPoint { line: usize, id: u64 },
    #[error("trajectory pose {0} lies inside a scene mesh")]
    PoseInsideScene(usize),
    #[error("invalid rotation: {0}")]
    InvalidRotation(String),
    #[error("window must be at least 1")]
    EmptyWindow,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub const DEFAULT_HFOV: f64 = 1.57;

    /// Square pixels, principal point at the image centre.
    pub fn from_hfov(width: u32, height: u32, hfov: f64) -> Self {
        let fx = width as f64 / (2.0 * (hfov / 2.0).tan());
        CameraIntrinsics {
            fx,
            fy: fx,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn hfov(&self) -> f64 {
        2.0 * (self.width as f64 / (2.0 * self.fx)).atan()
    }

    pub fn is_valid(&self) -> bool {
        self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        CameraIntrinsics::from_hfov(640, 480, Self::DEFAULT_HFOV)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    /// world <- camera
    pub rotation: UnitQuaternion<f64>,
    /// Camera centre in world coordinates.
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose { rotation: UnitQuaternion::identity(), translation: Vec3::zeros() }
    }

    pub fn from_matrix(m: Matrix3<f64>, translation: Vec3) -> Result<Self, SlamError> {
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        if err > 1e-9 {
            return Err(SlamError::InvalidRotation(format!("not orthonormal (error {err:e})")));
        }
        if (m.determinant() - 1.0).abs() > 1e-9 {
            return Err(SlamError::InvalidRotation("determinant is not +1".into()));
        }
        let r = Rotation3::from_matrix_unchecked(m);
        Ok(Pose { rotation: UnitQuaternion::from_rotation_matrix(&r), translation })
    }

    /// Camera at `eye` looking at `target`; image y points away from `up`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Self {
        let f = (target - eye).normalize();
        let x = f.cross(&up).normalize();
        let y = f.cross(&x);
        let m = Matrix3::from_columns(&[x, y, f]);
        let r = Rotation3::from_matrix_unchecked(m);
        Pose { rotation: UnitQuaternion::from_rotation_matrix(&r), translation: eye }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    /// World-frame viewing direction (camera +z).
    pub fn forward(&self) -> Vec3 {
        self.rotation * Vec3::z()
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation.inverse_transform_vector(&(p - self.translation))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapPoint {
    pub id: u64,
    pub position: Vec3,
    pub observers: BTreeSet<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub id: u64,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
    /// Sorted, unique map point ids.
    pub observations: Vec<u64>,
    pub image_ref: Option<String>,
}

impl Keyframe {
    /// Pixel coordinates and depth of `p`, or `None` when behind the camera
    /// or outside the image.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64, f64)> {
        let q = self.pose.to_camera(p);
        if q.z <= 0.0 {
            return None;
        }
        let k = &self.intrinsics;
        let u = k.fx * q.x / q.z + k.cx;
        let v = k.fy * q.y / q.z + k.cy;
        let inside = u >= 0.0 && u <= k.width as f64 && v >= 0.0 && v <= k.height as f64;
        inside.then_some((u, v, q.z))
    }

    /// World-frame unit ray through pixel `(u, v)`.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vec3 {
        let k = &self.intrinsics;
        let d = Vec3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        (self.pose.rotation * d).normalize()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrontendEvent {
    /// A keyframe together with the map points it introduces.
    NewKeyframe { keyframe: Keyframe, new_points: Vec<(u64, Vec3)> },
    PointUpdate { id: u64, position: Vec3 },
    PointRemoval { id: u64 },
}

/// Ground-truth scene: a set of closed triangle meshes.
#[derive(Debug, Clone)]
pub struct Scene {
    pub meshes: Vec<SurfaceMesh>,
}

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    pub mesh: usize,
    pub triangle: usize,
}

impl Scene {
    pub fn new(meshes: Vec<SurfaceMesh>) -> Self {
        Scene { meshes }
    }

    pub fn bounds(&self) -> Aabb {
        self.meshes.iter().fold(Aabb::empty(), |b, m| b.merge(&m.bounds()))
    }

    /// All meshes merged into one ground-truth surface.
    pub fn surface(&self) -> SurfaceMesh {
        SurfaceMesh::merged(0, &self.meshes)
    }

    pub fn first_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (mi, m) in self.meshes.iter().enumerate() {
            for ti in 0..m.triangles.len() {
                let [a, b, c] = m.triangle(ti);
                if let Some((t, u, v)) = ray_triangle(origin, dir, a, b, c) {
                    if best.map_or(true, |h| t < h.t) {
                        best = Some(Hit { t, point: barycentric_point(a, b, c, u, v), mesh: mi, triangle: ti });
                    }
                }
            }
        }
        best
    }

    /// Ray-parity inside test against every mesh.
    pub fn contains(&self, p: &Vec3) -> bool {
        let dir = Vec3::new(0.5773502691896258, 0.5773712691896258, 0.5773292691896258);
        self.meshes.iter().any(|m| {
            let hits = (0..m.triangles.len())
                .filter(|&ti| {
                    let [a, b, c] = m.triangle(ti);
                    ray_triangle(p, &dir, a, b, c).is_some()
                })
                .count();
            hits % 2 == 1
        })
    }
}

/// Poses on a circle around `target`, cycling through `elevations`
/// (radians above the horizontal plane).
pub fn orbit_trajectory(target: Vec3, radius: f64, count: usize, elevations: &[f64]) -> Vec<Pose> {
    (0..count)
        .map(|k| {
            let th = std::f64::consts::TAU * k as f64 / count as f64;
            let e = elevations[k % elevations.len()];
            let eye = target + radius * Vec3::new(e.cos() * th.cos(), e.cos() * th.sin(), e.sin());
            Pose::look_at(eye, target, Vec3::z())
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub intrinsics: CameraIntrinsics,
    pub points_per_keyframe: usize,
    pub noise_sigma: f64,
    /// Share of each keyframe's budget spent re-observing visible points.
    pub reobserve_fraction: f64,
    /// Emit bundle-adjustment moves every this many keyframes (0 disables).
    pub ba_interval: usize,
    pub ba_fraction: f64,
    pub ba_sigma: f64,
    pub window: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            intrinsics: CameraIntrinsics::default(),
            points_per_keyframe: 300,
            noise_sigma: 0.0,
            reobserve_fraction: 0.2,
            ba_interval: 0,
            ba_fraction: 0.05,
            ba_sigma: 0.005,
            window: 50,
            seed: 1,
        }
    }
}

fn gaussian3(rng: &mut ChaCha8Rng, sigma: f64) -> Vec3 {
    if sigma == 0.0 {
        return Vec3::zeros();
    }
    Vec3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    ) * sigma
}

/// Generates a keyframe stream by ray casting `scene` from each pose.
pub fn synth_scene(scene: &Scene, trajectory: &[Pose], params: &SynthParams) -> Result<Vec<FrontendEvent>, SlamError> {
    for (i, p) in trajectory.iter().enumerate() {
        if scene.contains(&p.translation) {
            return Err(SlamError::PoseInsideScene(i));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut events = Vec::new();
    // id -> (ground truth, current estimate)
    let mut points: BTreeMap<u64, (Vec3, Vec3)> = BTreeMap::new();
    let mut state = StreamState::default();
    let scale = scene.bounds().diagonal().max(1e-9);
    let n = params.points_per_keyframe;

    for (k, pose) in trajectory.iter().enumerate() {
        let mut kf = Keyframe {
            id: k as u64,
            pose: *pose,
            intrinsics: params.intrinsics,
            observations: Vec::new(),
            image_ref: None,
        };
        let eye = pose.translation;

        let candidates: Vec<u64> = points
            .iter()
            .filter(|(_, (truth, est))| {
                if kf.project(est).is_none() {
                    return false;
                }
                let d = truth - eye;
                let dist = d.norm();
                scene.first_hit(&eye, &(d / dist)).is_some_and(|h| (h.t - dist).abs() <= 1e-9 * scale)
            })
            .map(|(&id, _)| id)
            .collect();
        let want = ((n as f64 * params.reobserve_fraction).round() as usize).min(candidates.len());
        let mut obs: Vec<u64> = sample(&mut rng, candidates.len(), want).into_iter().map(|i| candidates[i]).collect();

        let mut new_points = Vec::new();
        let mut attempts = 0;
        let mut hits = 0;
        let w = params.intrinsics.width as f64;
        let h = params.intrinsics.height as f64;
        while obs.len() < n && attempts < 20 * n.max(1) {
            attempts += 1;
            if hits == 0 && attempts > 4 * n {
                break;
            }
            let (u, v) = (rng.gen_range(0.0..w), rng.gen_range(0.0..h));
            let dir = kf.pixel_ray(u, v);
            let Some(hit) = scene.first_hit(&eye, &dir) else { continue };
            hits += 1;
            let est = hit.point + gaussian3(&mut rng, params.noise_sigma);
            if kf.project(&est).is_none() {
                continue;
            }
            let id = points.len() as u64;
            points.insert(id, (hit.point, est));
            new_points.push((id, est));
            obs.push(id);
        }
        if obs.is_empty() {
            log::warn!("keyframe {} observes no points", kf.id);
        }
        obs.sort_unstable();
        kf.observations = obs;
        let ev = FrontendEvent::NewKeyframe { keyframe: kf, new_points };
        state.apply(&ev).expect("synthetic events are consistent");
        events.push(ev);

        if params.ba_interval > 0 && (k + 1) % params.ba_interval == 0 {
            let window: Vec<u64> = state.windowed_observations(params.window.max(1)).into_iter().collect();
            let m = ((window.len() as f64 * params.ba_fraction).ceil() as usize).min(window.len());
            let mut chosen: Vec<u64> = sample(&mut rng, window.len(), m).into_iter().map(|i| window[i]).collect();
            chosen.sort_unstable();
            for id in chosen {
                let entry = points.get_mut(&id).expect("window point exists");
                entry.1 += gaussian3(&mut rng, params.ba_sigma);
                let ev = FrontendEvent::PointUpdate { id, position: entry.1 };
                state.apply(&ev).expect("synthetic events are consistent");
                events.push(ev);
            }
        }
    }
    Ok(events)
}

/// Running view of a stream: keyframes seen and current point estimates.
#[derive(Debug, Clone, Default)]
pub struct StreamState {
    keyframes: Vec<(u64, Vec<u64>)>,
    points: BTreeMap<u64, MapPoint>,
}

impl StreamState {
    pub fn apply(&mut self, ev: &FrontendEvent) -> Result<(), SlamError> {
        match ev {
            FrontendEvent::NewKeyframe { keyframe, new_points } => {
                for &(id, position) in new_points {
                    self.points.insert(id, MapPoint { id, position, observers: BTreeSet::new() });
                }
                for &id in &keyframe.observations {
                    let p = self.points.get_mut(&id).ok_or(SlamError::DanglingPoint { line: 0, id })?;
                    p.observers.insert(keyframe.id);
                }
                self.keyframes.push((keyframe.id, keyframe.observations.clone()));
            }
            FrontendEvent::PointUpdate { id, position } => {
                let p = self.points.get_mut(id).ok_or(SlamError::DanglingPoint { line: 0, id: *id })?;
                p.position = *position;
            }
            FrontendEvent::PointRemoval { id } => {
                self.points.remove(id).ok_or(SlamError::DanglingPoint { line: 0, id: *id })?;
            }
        }
        Ok(())
    }

    pub fn point(&self, id: u64) -> Option<&MapPoint> {
        self.points.get(&id)
    }

    pub fn points(&self) -> impl Iterator<Item = &MapPoint> {
        self.points.values()
    }

    pub fn num_keyframes(&self) -> usize {
        self.keyframes.len()
    }

    /// Live points observed by any of the most recent `window` keyframes.
    pub fn windowed_observations(&self, window: usize) -> BTreeSet<u64> {
        let start = self.keyframes.len().saturating_sub(window);
        self.keyframes[start..]
            .iter()
            .flat_map(|(_, obs)| obs.iter().copied())
            .filter(|id| self.points.contains_key(id))
            .collect()
    }
}

/// Serializes events in the scene-stream text format.
pub fn write_stream(events: &[FrontendEvent]) -> String {
    let mut s = String::from("# meshtwin scene stream\n");
    for ev in events {
        match ev {
            FrontendEvent::NewKeyframe { keyframe: kf, new_points } => {
                let t = kf.pose.translation;
                let q = kf.pose.rotation.quaternion();
                let k = &kf.intrinsics;
                let _ = write!(
                    s,
                    "KF {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
                    kf.id, t.x, t.y, t.z, q.i, q.j, q.k, q.w, k.fx, k.fy, k.cx, k.cy, k.width, k.height
                );
                if let Some(img) = &kf.image_ref {
                    let _ = write!(s, " {img}");
                }
                s.push('\n');
                for (id, p) in new_points {
                    let _ = writeln!(s, "PT {} {} {} {}", id, p.x, p.y, p.z);
                }
                for id in &kf.observations {
                    let _ = writeln!(s, "OBS {} {}", kf.id, id);
                }
            }
            FrontendEvent::PointUpdate { id, position: p } => {
                let _ = writeln!(s, "UPD {} {} {} {}", id, p.x, p.y, p.z);
            }
            FrontendEvent::PointRemoval { id } => {
                let _ = writeln!(s, "DEL {id}");
            }
        }
    }
    s
}

pub fn load_trajectory(path: &Path) -> Result<Vec<FrontendEvent>, SlamError> {
    parse_stream(&std::fs::read_to_string(path)?)
}

pub fn parse_stream(text: &str) -> Result<Vec<FrontendEvent>, SlamError> {
    struct Open {
        kf: Keyframe,
        new_points: Vec<(u64, Vec3)>,
        obs: Vec<(usize, u64)>,
    }
    let mut events = Vec::new();
    let mut known: BTreeSet<u64> = BTreeSet::new();
    let mut open: Option<Open> = None;

    fn close(open: &mut Option<Open>, known: &BTreeSet<u64>, events: &mut Vec<FrontendEvent>) -> Result<(), SlamError> {
        if let Some(o) = open.take() {
            let mut ids = Vec::with_capacity(o.obs.len());
            for (line, id) in o.obs {
                if !known.contains(&id) {
                    return Err(SlamError::DanglingPoint { line, id });
                }
                ids.push(id);
            }
            ids.sort_unstable();
            ids.dedup();
            let mut kf = o.kf;
            kf.observations = ids;
            events.push(FrontendEvent::NewKeyframe { keyframe: kf, new_points: o.new_points });
        }
        Ok(())
    }

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let f: Vec<&str> = body.split_whitespace().collect();
        let perr = |msg: &str| SlamError::Parse { line, msg: msg.to_string() };
        let num = |s: &str| s.parse::<f64>().map_err(|_| perr(&format!("bad number {s:?}")));
        let int = |s: &str| s.parse::<u64>().map_err(|_| perr(&format!("bad integer {s:?}")));
        let arity = |n: usize| {
            if f.len() == n {
                Ok(())
            } else {
                Err(perr(&format!("{} expects {} fields, found {}", f[0], n - 1, f.len() - 1)))
            }
        };
        match f[0] {
            "KF" => {
                if f.len() != 15 && f.len() != 16 {
                    return Err(perr(&format!("KF expects 14 or 15 fields, found {}", f.len() - 1)));
                }
                close(&mut open, &known, &mut events)?;
                let id = int(f[1])?;
                let t = Vec3::new(num(f[2])?, num(f[3])?, num(f[4])?);
                let q = Quaternion::new(num(f[8])?, num(f[5])?, num(f[6])?, num(f[7])?);
                let norm = q.norm();
                if !(norm - 1.0).abs().is_finite() || norm == 0.0 {
                    return Err(perr("degenerate quaternion"));
                }
                // Keep written quaternions bit-exact; renormalize anything else.
                let rotation = if (norm - 1.0).abs() <= 1e-9 { Unit::new_unchecked(q) } else { Unit::new_normalize(q) };
                let intrinsics = CameraIntrinsics {
                    fx: num(f[9])?,
                    fy: num(f[10])?,
                    cx: num(f[11])?,
                    cy: num(f[12])?,
                    width: int(f[13])? as u32,
                    height: int(f[14])? as u32,
                };
                if !intrinsics.is_valid() {
                    return Err(perr("invalid intrinsics"));
                }
                if let Some((last, _)) = events.iter().rev().find_map(|e| match e {
                    FrontendEvent::NewKeyframe { keyframe, .. } => Some((keyframe.id, ())),
                    _ => None,
                }) {
                    if id <= last {
                        return Err(perr(&format!("keyframe id {id} is not increasing")));
                    }
                }
                open = Some(Open {
                    kf: Keyframe {
                        id,
                        pose: Pose { rotation, translation: t },
                        intrinsics,
                        observations: Vec::new(),
                        image_ref: f.get(15).map(|s| s.to_string()),
                    },
                    new_points: Vec::new(),
                    obs: Vec::new(),
                });
            }
            "PT" => {
                arity(5)?;
                let Some(o) = open.as_mut() else { return Err(perr("PT outside a keyframe block")) };
                let id = int(f[1])?;
                if !known.insert(id) {
                    return Err(perr(&format!("point {id} introduced twice")));
                }
                let p = Vec3::new(num(f[2])?, num(f[3])?, num(f[4])?);
                if !p.iter().all(|c| c.is_finite()) {
                    return Err(perr("non-finite point"));
                }
                o.new_points.push((id, p));
            }
            "OBS" => {
                arity(3)?;
                let Some(o) = open.as_mut() else { return Err(perr("OBS outside a keyframe block")) };
                let kf = int(f[1])?;
                if kf != o.kf.id {
                    return Err(perr(&format!("OBS refers to keyframe {kf}, current is {}", o.kf.id)));
                }
                o.obs.push((line, int(f[2])?));
            }
            "UPD" => {
                arity(5)?;
                close(&mut open, &known, &mut events)?;
                let id = int(f[1])?;
                if !known.contains(&id) {
                    return Err(SlamError::DanglingPoint { line, id });
                }
                let p = Vec3::new(num(f[2])?, num(f[3])?, num(f[4])?);
                events.push(FrontendEvent::PointUpdate { id, position: p });
            }
            "DEL" => {
                arity(2)?;
                close(&mut open, &known, &mut events)?;
                let id = int(f[1])?;
                if !known.remove(&id) {
                    return Err(SlamError::DanglingPoint { line, id });
                }
                events.push(FrontendEvent::PointRemoval { id });
            }
            other => return Err(perr(&format!("unknown record {other:?}"))),
        }
    }
    close(&mut open, &known, &mut events)?;
    Ok(events)
}

/// Bounding box of every point position and camera centre in a stream.
pub fn stream_bounds(events: &[FrontendEvent]) -> Aabb {
    let mut b = Aabb::empty();
    for ev in events {
        match ev {
            FrontendEvent::NewKeyframe { keyframe, new_points } => {
                b.grow(&keyframe.pose.translation);
                for (_, p) in new_points {
                    b.grow(p);
                }
            }
            FrontendEvent::PointUpdate { position, .. } => b.grow(position),
            FrontendEvent::PointRemoval { .. } => {}
        }
    }
    b
}
