//! Teleoperation session on a simulated clock.
//!
//! Each haptic tick runs, in order: frontend ingestion (at the keyframe
//! rate), operator commands, pose rate limiting, the local haptic step
//! against the carved mesh, the follower (commands delivered by the forward
//! channel, haptic step against the ground truth), and echo delivery back to
//! the operator side.

pub mod channel;
pub mod config;
pub mod script;
pub mod wire;

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::carving::{CarveError, ReconParams, Reconstruction};
use crate::contact::{
    haptic_step, ArmError, ArmModel, ArmState, ContactEvent, HapticParams, HapticSnapshot, PublishError, SnapshotCell,
};
use crate::geometry::Vec3;
use crate::mesh::SurfaceMesh;
use crate::mesh_io::{self, obj_string, MeshIoError};
use crate::slam::{self, orbit_trajectory, synth_scene, FrontendEvent, Keyframe, Pose, Scene, SlamError, SynthParams};
pub use channel::{micros, seconds, ChannelParams, DelayChannel, Micros, RateLimiter};
pub use config::{ConfigError, FrontendKind, PoseSource, SceneKind, SessionConfig};
pub use script::{Jog, OperatorCommand, OperatorScript, ScriptStep};
use wire::{ContactMsg, ServerMsg, TwinState};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Arm(#[from] ArmError),
    #[error(transparent)]
    Slam(#[from] SlamError),
    #[error(transparent)]
    Carve(#[from] CarveError),
    #[error(transparent)]
    MeshIo(#[from] MeshIoError),
}

/// Ground truth and the event stream that observes it.
#[derive(Debug, Clone)]
pub struct Frontend {
    pub events: Vec<FrontendEvent>,
    pub truth: SurfaceMesh,
}

/// 2 m × 2 m platform, 0.2 m thick, top face at z = 0. A zero-thickness
/// floor bounds no occupied volume, so it could never be carved.
pub fn platform() -> SurfaceMesh {
    SurfaceMesh::cuboid(Vec3::new(0.0, 0.0, -0.1), Vec3::new(1.0, 1.0, 0.1))
}

/// Ground-truth meshes plus the camera orbit (target, radius, elevations).
pub fn scene_meshes(kind: SceneKind) -> (Vec<SurfaceMesh>, Vec3, f64, Vec<f64>) {
    match kind {
        SceneKind::Floor => (vec![platform()], Vec3::zeros(), 2.2, vec![0.35, 0.6, 0.45]),
        SceneKind::Cube => {
            (vec![SurfaceMesh::cuboid(Vec3::zeros(), Vec3::repeat(0.15))], Vec3::zeros(), 0.8, vec![0.5, -0.4, 1.1, -1.0])
        }
        SceneKind::CubeOnFloor => (
            vec![platform(), SurfaceMesh::cuboid(Vec3::new(0.0, 0.0, 0.15), Vec3::repeat(0.15))],
            Vec3::new(0.0, 0.0, 0.1),
            2.2,
            vec![0.35, 0.7, 0.5],
        ),
    }
}

pub fn build_frontend(cfg: &SessionConfig) -> Result<Frontend, SessionError> {
    let f = &cfg.frontend;
    match f.kind {
        FrontendKind::Synthetic => {
            let (meshes, target, radius, elevations) = scene_meshes(f.scene);
            let scene = Scene::new(meshes);
            let traj = orbit_trajectory(target, radius, f.keyframes, &elevations);
            let params = SynthParams {
                points_per_keyframe: f.points_per_keyframe,
                noise_sigma: f.noise_sigma,
                ba_interval: f.ba_interval,
                seed: cfg.seed,
                ..Default::default()
            };
            let events = synth_scene(&scene, &traj, &params)?;
            Ok(Frontend { events, truth: scene.surface() })
        }
        FrontendKind::File => {
            let path = cfg.resolve(f.path.as_deref().expect("validated"));
            let gt = cfg.resolve(f.ground_truth.as_deref().expect("validated"));
            Ok(Frontend { events: slam::load_trajectory(&path)?, truth: mesh_io::load_obj(&gt)? })
        }
    }
}

pub fn load_arm(cfg: &SessionConfig) -> Result<ArmModel, SessionError> {
    Ok(match cfg.arm.model.as_str() {
        "gantry" => ArmModel::gantry(),
        "seven_dof" => ArmModel::seven_dof(),
        p => ArmModel::load(&cfg.resolve(Path::new(p)))?,
    })
}

/// Paired contact onsets for one proxy: predicted locally and echoed back
/// from the follower.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactRecord {
    pub proxy: usize,
    pub local_time: Option<Micros>,
    pub echo_time: Option<Micros>,
    pub local_gap: Option<f64>,
    pub echo_gap: Option<f64>,
}

impl ContactRecord {
    /// echo − local (seconds).
    pub fn lead(&self) -> Option<f64> {
        Some((self.echo_time? as i64 - self.local_time? as i64) as f64 * 1e-6)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionMetrics {
    pub contacts: Vec<ContactRecord>,
    pub poses_offered: u64,
    pub poses_applied: u64,
    /// Applied poses per simulated second.
    pub pose_rate_hz: f64,
    pub keyframes: usize,
    /// Keyframes per wall-clock second spent in reconstruction.
    pub recon_rate_kfps: f64,
    pub mesh_versions: Vec<u64>,
    pub swap_ms: Vec<f64>,
    pub haptic_p99_ms: f64,
    pub sim_seconds: f64,
    pub wall_seconds: f64,
    pub rtf: f64,
}

pub const METRICS_HEADER: &str = "proxy,local_s,echo_s,lead_s,local_gap_m,echo_gap_m";

impl SessionMetrics {
    /// One row per contact record. Only simulated quantities appear, so the
    /// output is reproducible for a fixed seed. Missing sides are empty.
    pub fn csv(&self) -> String {
        let mut s = format!("{METRICS_HEADER}\n");
        let t = |x: Option<Micros>| x.map(|v| format!("{:.6}", seconds(v))).unwrap_or_default();
        let g = |x: Option<f64>| x.map(|v| format!("{v:.9}")).unwrap_or_default();
        for r in &self.contacts {
            let lead = r.lead().map(|v| format!("{v:.6}")).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{},{}", r.proxy, t(r.local_time), t(r.echo_time), lead, g(r.local_gap), g(r.echo_gap));
        }
        s
    }
}

/// Follower report sent back over the return channel.
#[derive(Debug, Clone)]
struct Echo {
    time: Micros,
    positions: Vec<f64>,
    onsets: Vec<ContactEvent>,
}

pub struct Session {
    cfg: SessionConfig,
    arm: ArmModel,
    params: HapticParams,
    script: OperatorScript,
    now: Micros,
    tick: Micros,
    end: Micros,

    events: Vec<FrontendEvent>,
    cursor: usize,
    kf_interval: Micros,
    next_kf: Micros,
    recon: Reconstruction,
    keyframes: Vec<Keyframe>,
    last_slam_pose: Option<Pose>,

    local_cell: Arc<SnapshotCell>,
    truth: Arc<HapticSnapshot>,
    latest_obj: Option<Arc<String>>,

    local: ArmState,
    follower: ArmState,
    script_halted: bool,
    forward: DelayChannel<OperatorCommand>,
    back: DelayChannel<Echo>,

    local_contact: Vec<bool>,
    follower_contact: Vec<bool>,
    records: Vec<ContactRecord>,
    open_local: Vec<VecDeque<usize>>,
    open_echo: Vec<VecDeque<usize>>,
    local_events: Vec<ContactEvent>,

    pose_limiter: RateLimiter<Pose>,
    render_camera: Pose,
    operator_pose_set: bool,
    poses_offered: u64,
    poses_applied: u64,
    texture_keyframe: Option<u64>,

    follower_log: Vec<(Micros, Vec<f64>)>,
    echo_state: Option<TwinState>,
    state_interval: Micros,
    next_state: Micros,
    next_follower_state: Micros,

    ui: bool,
    outbox: Vec<ServerMsg>,
    inbox: VecDeque<OperatorCommand>,

    step_times: Vec<f64>,
    swap_ms: Vec<f64>,
    mesh_versions: Vec<u64>,
    recon_wall: Duration,
    kf_done: usize,
    wall_start: Option<Instant>,
    pace_origin: Option<(Instant, Micros)>,
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Result<Self, SessionError> {
        cfg.validate()?;
        let frontend = build_frontend(&cfg)?;
        Self::with_frontend(cfg, frontend)
    }

    pub fn with_frontend(cfg: SessionConfig, frontend: Frontend) -> Result<Self, SessionError> {
        cfg.validate()?;
        let arm = load_arm(&cfg)?;
        let params = cfg.haptics.params();
        let home = match &cfg.arm.home {
            Some(q) => ArmState::new(&arm, q.clone(), vec![0.0; arm.num_joints()], 0.0)?,
            None => ArmState::home(&arm),
        };
        let mut bounds = slam::stream_bounds(&frontend.events);
        bounds = bounds.merge(&frontend.truth.bounds());
        let recon = Reconstruction::new(bounds, ReconParams::default())?;
        let mut truth_mesh = frontend.truth;
        truth_mesh.version = 1;
        let tick = micros(1.0 / params.rate_hz).max(1);
        let state_interval = micros(1.0 / cfg.session.state_rate).max(1);
        let n = arm.proxies.len();
        let ch = cfg.channel.params();
        Ok(Session {
            script: OperatorScript::new(cfg.operator.script.clone()),
            now: 0,
            tick,
            end: micros(cfg.duration),
            events: frontend.events,
            cursor: 0,
            kf_interval: micros(1.0 / cfg.frontend.keyframe_rate).max(1),
            next_kf: 0,
            recon,
            keyframes: Vec::new(),
            last_slam_pose: None,
            local_cell: Arc::new(SnapshotCell::new()),
            truth: Arc::new(HapticSnapshot::new(Arc::new(truth_mesh))),
            latest_obj: None,
            local: home.clone(),
            follower: home,
            script_halted: false,
            forward: DelayChannel::new(&ch, cfg.seed.wrapping_mul(2).wrapping_add(11)),
            back: DelayChannel::new(&ch, cfg.seed.wrapping_mul(2).wrapping_add(12)),
            local_contact: vec![false; n],
            follower_contact: vec![false; n],
            records: Vec::new(),
            open_local: vec![VecDeque::new(); n],
            open_echo: vec![VecDeque::new(); n],
            local_events: Vec::new(),
            pose_limiter: RateLimiter::new(cfg.session.pose_rate),
            render_camera: Pose::identity(),
            operator_pose_set: false,
            poses_offered: 0,
            poses_applied: 0,
            texture_keyframe: None,
            follower_log: Vec::new(),
            echo_state: None,
            state_interval,
            next_state: 0,
            next_follower_state: 0,
            ui: false,
            outbox: Vec::new(),
            inbox: VecDeque::new(),
            step_times: Vec::new(),
            swap_ms: Vec::new(),
            mesh_versions: Vec::new(),
            recon_wall: Duration::ZERO,
            kf_done: 0,
            wall_start: None,
            pace_origin: None,
            arm,
            params,
            cfg,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn arm(&self) -> &ArmModel {
        &self.arm
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn tick(&self) -> Micros {
        self.tick
    }

    pub fn is_finished(&self) -> bool {
        self.now >= self.end
    }

    pub fn local_state(&self) -> &ArmState {
        &self.local
    }

    pub fn follower_state(&self) -> &ArmState {
        &self.follower
    }

    pub fn render_camera(&self) -> &Pose {
        &self.render_camera
    }

    pub fn texture_keyframe(&self) -> Option<u64> {
        self.texture_keyframe
    }

    pub fn snapshot_cell(&self) -> Arc<SnapshotCell> {
        self.local_cell.clone()
    }

    pub fn truth(&self) -> &SurfaceMesh {
        &self.truth.mesh
    }

    pub fn current_mesh(&self) -> Option<Arc<SurfaceMesh>> {
        self.local_cell.load().map(|s| s.mesh.clone())
    }

    pub fn latest_obj(&self) -> Option<Arc<String>> {
        self.latest_obj.clone()
    }

    /// (time, joint positions) after every follower change.
    pub fn follower_trajectory(&self) -> &[(Micros, Vec<f64>)] {
        &self.follower_log
    }

    pub fn contacts(&self) -> &[ContactRecord] {
        &self.records
    }

    /// Local contact events from the latest tick.
    pub fn local_events(&self) -> &[ContactEvent] {
        &self.local_events
    }

    /// Starts collecting UI messages.
    pub fn enable_ui(&mut self) {
        self.ui = true;
    }

    pub fn drain_outbox(&mut self) -> Vec<ServerMsg> {
        std::mem::take(&mut self.outbox)
    }

    /// Queues a live operator command for the next tick.
    pub fn push_command(&mut self, cmd: OperatorCommand) {
        self.inbox.push_back(cmd);
    }

    pub fn set_paced(&mut self, pace: bool) {
        self.cfg.session.pace = pace;
        self.pace_origin = None;
    }

    /// Lets a live session run past its configured duration.
    pub fn extend(&mut self, seconds: f64) {
        self.end = self.end.max(self.now + micros(seconds));
    }

    fn emit(&mut self, m: ServerMsg) {
        if self.ui {
            self.outbox.push(m);
        }
    }

    /// Serializes, builds the BVH and swaps the haptic snapshot. Stale
    /// versions are rejected and logged.
    pub fn publish_mesh_update(&mut self, mesh: SurfaceMesh) -> Result<Duration, PublishError> {
        let t0 = Instant::now();
        if let Some(cur) = self.local_cell.version() {
            if mesh.version <= cur {
                log::warn!("rejected stale mesh version {} (current {cur})", mesh.version);
                return Err(PublishError::Stale { offered: mesh.version, current: cur });
            }
        }
        let obj = Arc::new(obj_string(&mesh));
        let version = mesh.version;
        let triangles = mesh.triangles.len();
        self.local_cell.publish(Arc::new(mesh))?;
        let dt = t0.elapsed();
        self.latest_obj = Some(obj);
        self.swap_ms.push(dt.as_secs_f64() * 1e3);
        self.mesh_versions.push(version);
        self.update_texture();
        let texture_keyframe = self.texture_keyframe;
        self.emit(ServerMsg::Mesh { version, url: format!("/mesh.obj?v={version}"), triangles, texture_keyframe });
        Ok(dt)
    }

    /// Operator viewpoint update, rate limited latest-wins. Never reaches
    /// the follower.
    pub fn stream_operator_pose(&mut self, pose: Pose) {
        self.poses_offered += 1;
        if let Some(p) = self.pose_limiter.offer(self.now, pose) {
            self.apply_pose(p);
        }
    }

    fn apply_pose(&mut self, p: Pose) {
        self.render_camera = p;
        self.operator_pose_set = true;
        self.poses_applied += 1;
        self.update_texture();
    }

    fn update_texture(&mut self) {
        let pose = match self.cfg.session.texture_pose_source {
            PoseSource::Operator if self.operator_pose_set => Some(self.render_camera),
            _ => self.last_slam_pose,
        };
        if let Some(p) = pose {
            self.texture_keyframe = mesh_io::select_texture_keyframe(&p, &self.keyframes, self.recon.diameter()).ok();
        }
    }

    fn ingest_keyframe(&mut self) -> Result<(), SessionError> {
        let t0 = Instant::now();
        let mut changed = false;
        let mut seen_kf = false;
        while let Some(ev) = self.events.get(self.cursor) {
            match ev {
                FrontendEvent::NewKeyframe { keyframe, new_points } => {
                    if seen_kf {
                        break;
                    }
                    seen_kf = true;
                    let d = self.recon.integrate_keyframe(keyframe, new_points)?;
                    changed |= !d.is_empty();
                    self.last_slam_pose = Some(keyframe.pose);
                    self.keyframes.push(keyframe.clone());
                    self.kf_done += 1;
                }
                FrontendEvent::PointUpdate { id, position } => {
                    changed |= !self.recon.handle_point_update(*id, *position)?.is_empty();
                }
                FrontendEvent::PointRemoval { id } => {
                    changed |= !self.recon.handle_point_removal(*id)?.is_empty();
                }
            }
            self.cursor += 1;
        }
        let mesh = changed.then(|| self.recon.extract_surface());
        self.recon_wall += t0.elapsed();
        if let Some(m) = mesh {
            let _ = self.publish_mesh_update(m);
        }
        Ok(())
    }

    fn apply_jog(arm: &ArmModel, state: &mut ArmState, jog: &Jog, damping: f64, dt: f64) -> Result<(), ArmError> {
        let q = match jog {
            Jog::Cartesian(d) => arm.jog_cartesian(&state.positions, d, damping)?,
            Jog::Joints(d) => arm.jog_joints(&state.positions, d)?,
        };
        state.velocities = q.iter().zip(&state.positions).map(|(a, b)| (a - b) / dt).collect();
        state.positions = q;
        Ok(())
    }

    fn twin_state(&self, s: &ArmState, time: Micros) -> TwinState {
        let spheres = self.arm.forward_kinematics(&s.positions).unwrap_or_default();
        TwinState {
            time: seconds(time),
            positions: s.positions.clone(),
            proxies: spheres.iter().map(|p| [p.center.x, p.center.y, p.center.z, p.radius]).collect(),
        }
    }

    fn onsets(events: &[ContactEvent], in_contact: &mut [bool]) -> Vec<ContactEvent> {
        let mut now = vec![false; in_contact.len()];
        let mut out = Vec::new();
        for e in events.iter().filter(|e| e.has_force()) {
            now[e.proxy] = true;
            if !in_contact[e.proxy] {
                out.push(*e);
            }
        }
        in_contact.copy_from_slice(&now);
        out
    }

    /// Advances one haptic tick. Returns false once the session is over.
    pub fn step(&mut self) -> Result<bool, SessionError> {
        if self.is_finished() {
            return Ok(false);
        }
        self.wall_start.get_or_insert_with(Instant::now);
        if self.cfg.session.pace {
            let (origin, sim0) = *self.pace_origin.get_or_insert((Instant::now(), self.now));
            let target = origin + Duration::from_micros(self.now - sim0);
            let wall = Instant::now();
            if target > wall {
                std::thread::sleep(target - wall);
            }
        }
        let now = self.now;
        let dt = seconds(self.tick);

        // Frontend.
        if self.cursor < self.events.len() && now >= self.next_kf {
            self.ingest_keyframe()?;
            self.next_kf += self.kf_interval;
        }

        // Operator side.
        self.local.velocities.iter_mut().for_each(|v| *v = 0.0);
        let mut cmds = self.script.commands(now, self.tick);
        if cmds.contains(&OperatorCommand::Stop) {
            self.script_halted = true;
        }
        if self.script_halted {
            cmds.retain(|c| !matches!(c, OperatorCommand::EndEffectorJog(_)));
        }
        cmds.extend(self.inbox.drain(..));
        for cmd in cmds {
            match cmd {
                OperatorCommand::CameraPose(p) => self.stream_operator_pose(p),
                OperatorCommand::EndEffectorJog(j) => {
                    let j = j.bounded(self.cfg.arm.max_jog_step, self.cfg.arm.max_joint_step);
                    match Self::apply_jog(&self.arm, &mut self.local, &j, self.cfg.arm.damping, dt) {
                        Ok(()) => {
                            self.forward.send(now, OperatorCommand::EndEffectorJog(j));
                        }
                        Err(e) => log::warn!("ignored jog: {e}"),
                    }
                }
                OperatorCommand::Stop => {
                    self.script_halted = true;
                    self.local.velocities.iter_mut().for_each(|v| *v = 0.0);
                    self.forward.send(now, OperatorCommand::Stop);
                }
            }
        }
        if let Some(p) = self.pose_limiter.poll(now) {
            self.apply_pose(p);
        }
        self.local.timestamp = seconds(now);

        // Local predictive haptics.
        let snap = self.local_cell.load();
        let t0 = Instant::now();
        let events = haptic_step(&self.arm, &self.local, snap.as_deref(), &self.params)?;
        self.step_times.push(t0.elapsed().as_secs_f64());
        for e in Self::onsets(&events, &mut self.local_contact) {
            self.record_local(e.proxy, now, e.gap);
            self.emit(ServerMsg::Contact(ContactMsg::new("local", &e)));
        }
        self.local_events = events;

        // Follower.
        let mut moved = false;
        self.follower.velocities.iter_mut().for_each(|v| *v = 0.0);
        for env in self.forward.deliver(now) {
            match env.msg {
                OperatorCommand::EndEffectorJog(j) => {
                    if let Err(e) = Self::apply_jog(&self.arm, &mut self.follower, &j, self.cfg.arm.damping, dt) {
                        log::warn!("follower ignored jog: {e}");
                    }
                    moved = true;
                }
                OperatorCommand::Stop => self.follower.velocities.iter_mut().for_each(|v| *v = 0.0),
                OperatorCommand::CameraPose(_) => {}
            }
        }
        self.follower.timestamp = seconds(now);
        if moved {
            self.follower_log.push((now, self.follower.positions.clone()));
        }
        let fev = haptic_step(&self.arm, &self.follower, Some(&self.truth), &self.params)?;
        let onsets = Self::onsets(&fev, &mut self.follower_contact);
        if !onsets.is_empty() || now >= self.next_follower_state {
            if now >= self.next_follower_state {
                self.next_follower_state = now + self.state_interval;
            }
            self.back.send(now, Echo { time: now, positions: self.follower.positions.clone(), onsets });
        }

        // Echoes reaching the operator.
        for env in self.back.deliver(now) {
            for e in &env.msg.onsets {
                self.record_echo(e.proxy, now, e.gap);
                self.emit(ServerMsg::Contact(ContactMsg::new("echo", e)));
            }
            let s = ArmState { positions: env.msg.positions, velocities: Vec::new(), timestamp: seconds(env.msg.time) };
            self.echo_state = Some(self.twin_state(&s, env.msg.time));
        }

        if self.ui && now >= self.next_state {
            self.next_state = now + self.state_interval;
            let local = self.twin_state(&self.local, now);
            let echo = self.echo_state.clone();
            self.emit(ServerMsg::State { local, echo });
            let ongoing: Vec<ContactMsg> =
                self.local_events.iter().filter(|e| e.has_force()).map(|e| ContactMsg::new("local", e)).collect();
            for c in ongoing {
                self.emit(ServerMsg::Contact(c));
            }
        }

        self.now += self.tick;
        Ok(!self.is_finished())
    }

    fn record_local(&mut self, proxy: usize, t: Micros, gap: f64) {
        if let Some(i) = self.open_echo[proxy].pop_front() {
            self.records[i].local_time = Some(t);
            self.records[i].local_gap = Some(gap);
        } else {
            self.open_local[proxy].push_back(self.records.len());
            self.records.push(ContactRecord { proxy, local_time: Some(t), echo_time: None, local_gap: Some(gap), echo_gap: None });
        }
    }

    fn record_echo(&mut self, proxy: usize, t: Micros, gap: f64) {
        if let Some(i) = self.open_local[proxy].pop_front() {
            self.records[i].echo_time = Some(t);
            self.records[i].echo_gap = Some(gap);
        } else {
            self.open_echo[proxy].push_back(self.records.len());
            self.records.push(ContactRecord { proxy, local_time: None, echo_time: Some(t), local_gap: None, echo_gap: Some(gap) });
        }
    }

    pub fn run(&mut self) -> Result<SessionMetrics, SessionError> {
        while self.step()? {}
        Ok(self.metrics())
    }

    /// Simulated time over wall time while stepping for `window` seconds of
    /// wall clock (or until the session ends).
    pub fn measure_rtf(&mut self, window: f64) -> Result<f64, SessionError> {
        let w0 = Instant::now();
        let s0 = self.now;
        while w0.elapsed().as_secs_f64() < window && self.step()? {}
        let wall = w0.elapsed().as_secs_f64().max(1e-9);
        Ok(seconds(self.now - s0) / wall)
    }

    pub fn metrics(&self) -> SessionMetrics {
        let mut times = self.step_times.clone();
        times.sort_by(f64::total_cmp);
        let p99 = if times.is_empty() { 0.0 } else { times[((times.len() - 1) as f64 * 0.99).round() as usize] };
        let wall = self.wall_start.map_or(0.0, |w| w.elapsed().as_secs_f64());
        let sim = seconds(self.now);
        let rw = self.recon_wall.as_secs_f64();
        SessionMetrics {
            contacts: self.records.clone(),
            poses_offered: self.poses_offered,
            poses_applied: self.poses_applied,
            pose_rate_hz: if sim > 0.0 { self.poses_applied as f64 / sim } else { 0.0 },
            keyframes: self.kf_done,
            recon_rate_kfps: if rw > 0.0 { self.kf_done as f64 / rw } else { 0.0 },
            mesh_versions: self.mesh_versions.clone(),
            swap_ms: self.swap_ms.clone(),
            haptic_p99_ms: p99 * 1e3,
            sim_seconds: sim,
            wall_seconds: wall,
            rtf: if wall > 0.0 { sim / wall } else { 0.0 },
        }
    }
}

pub fn run_session(cfg: SessionConfig) -> Result<SessionMetrics, SessionError> {
    Session::new(cfg)?.run()
}
