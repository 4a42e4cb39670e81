use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use meshtwin_core::carving::{ReconParams, Reconstruction};
use meshtwin_core::contact::ArmModel;
use meshtwin_core::evaluation::{haptic_p99_ms, report, ReportInputs, TimingSummary};
use meshtwin_core::harness::{build_frontend, FrontendKind, SceneKind, Session, SessionConfig, SessionMetrics};
use meshtwin_core::mesh::SurfaceMesh;
use meshtwin_core::mesh_io::{export_obj, load_obj, obj_string};
use meshtwin_core::slam::{self, stream_bounds, write_stream, FrontendEvent};
use meshtwin_server::{serve, LiveSession};

#[derive(Parser)]
#[command(name = "meshtwin", version, about = "Incremental carving, predictive haptics and delayed teleoperation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a session from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Write the per-contact metrics CSV here.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Serve the UI endpoints on this address and run until Ctrl-C.
        #[arg(long)]
        serve: Option<SocketAddr>,
        #[arg(long)]
        seed: Option<u64>,
        /// Pace the simulated clock to the wall clock.
        #[arg(long)]
        pace: bool,
    },
    /// Precision/completeness of a reconstruction against ground truth.
    Eval {
        /// Reconstructed mesh (OBJ).
        #[arg(long, required_unless_present = "stream", conflicts_with = "stream")]
        recon: Option<PathBuf>,
        /// Reconstruct from this frontend stream first (measures keyframe rate).
        #[arg(long)]
        stream: Option<PathBuf>,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.02)]
        tau: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        csv: bool,
    },
    /// Reconstruct a frontend stream and write the surface as OBJ.
    Export {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic frontend stream and its ground-truth OBJ.
    Synth {
        #[arg(long, value_enum, default_value_t = Scene::Cube)]
        scene: Scene,
        #[arg(long, default_value_t = 12)]
        keyframes: usize,
        #[arg(long, default_value_t = 300)]
        points: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Emit point updates every N keyframes (0 = never).
        #[arg(long, default_value_t = 0)]
        ba_interval: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scene {
    Floor,
    Cube,
    CubeOnFloor,
}

impl From<Scene> for SceneKind {
    fn from(s: Scene) -> Self {
        match s {
            Scene::Floor => SceneKind::Floor,
            Scene::Cube => SceneKind::Cube,
            Scene::CubeOnFloor => SceneKind::CubeOnFloor,
        }
    }
}

fn summary(m: &SessionMetrics) -> String {
    let leads: Vec<String> = m.contacts.iter().filter_map(|r| r.lead()).map(|l| format!("{l:.3}")).collect();
    format!(
        "simulated {:.2} s in {:.2} s (RTF {:.2}); keyframes {} at {:.1}/s; mesh versions {}; haptic p99 {:.3} ms; \
         poses {}/{} applied ({:.1} Hz); contacts {} (leads s: [{}])",
        m.sim_seconds,
        m.wall_seconds,
        m.rtf,
        m.keyframes,
        m.recon_rate_kfps,
        m.mesh_versions.len(),
        m.haptic_p99_ms,
        m.poses_applied,
        m.poses_offered,
        m.pose_rate_hz,
        m.contacts.len(),
        leads.join(", ")
    )
}

fn record(path: Option<&Path>, m: &SessionMetrics) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, m.csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn reconstruct(events: &[FrontendEvent]) -> Result<(SurfaceMesh, f64)> {
    let mut r = Reconstruction::new(stream_bounds(events), ReconParams::default())?;
    let t0 = Instant::now();
    let mut kfs = 0;
    for ev in events {
        match ev {
            FrontendEvent::NewKeyframe { keyframe, new_points } => {
                r.integrate_keyframe(keyframe, new_points)?;
                kfs += 1;
            }
            FrontendEvent::PointUpdate { id, position } => {
                r.handle_point_update(*id, *position)?;
            }
            FrontendEvent::PointRemoval { id } => {
                r.handle_point_removal(*id)?;
            }
        }
    }
    let rate = kfs as f64 / t0.elapsed().as_secs_f64().max(1e-9);
    Ok((r.extract_surface(), rate))
}

fn run(config: &Path, record_to: Option<&Path>, addr: Option<SocketAddr>, seed: Option<u64>, pace: bool) -> Result<()> {
    let mut cfg = SessionConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.session.pace |= pace || addr.is_some();
    let session = Session::new(cfg)?;
    let Some(addr) = addr else {
        let mut session = session;
        let m = session.run()?;
        eprintln!("{}", summary(&m));
        record(record_to, &m)?;
        if record_to.is_none() {
            print!("{}", m.csv());
        }
        return Ok(());
    };
    let live = LiveSession::spawn(session, true);
    let state = live.state();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        tokio::select! {
            r = serve(addr, state) => r,
            r = tokio::signal::ctrl_c() => r,
        }
    })?;
    let m = live.stop()?;
    eprintln!("{}", summary(&m));
    record(record_to, &m)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::Run { config, record, serve, seed, pace } => run(&config, record.as_deref(), serve, seed, pace),
        Cmd::Eval { recon, stream, gt, tau, samples, seed, csv } => {
            let gt = load_obj(&gt).with_context(|| format!("loading {}", gt.display()))?;
            let (mesh, keyframe_rate) = match (recon, stream) {
                (Some(p), None) => (load_obj(&p).with_context(|| format!("loading {}", p.display()))?, f64::NAN),
                (None, Some(p)) => reconstruct(&slam::load_trajectory(&p)?)?,
                _ => bail!("give exactly one of --recon or --stream"),
            };
            let t0 = Instant::now();
            let _ = obj_string(&mesh);
            let export_ms = t0.elapsed().as_secs_f64() * 1e3;
            let haptic = if mesh.is_empty() { f64::NAN } else { haptic_p99_ms(&mesh, &ArmModel::seven_dof(), 2000, seed) };
            let timing = TimingSummary { keyframe_rate, haptic_p99_ms: haptic, export_ms };
            let r = report(&ReportInputs { recon: Some(&mesh), gt: Some(&gt), timing: Some(timing), tau, samples, seed })?;
            print!("{}", if csv { r.csv() } else { r.table() });
            Ok(())
        }
        Cmd::Export { stream, out } => {
            let (mesh, rate) = reconstruct(&slam::load_trajectory(&stream)?)?;
            let bytes = export_obj(&mesh, &out)?;
            eprintln!("{} triangles, {bytes} bytes, {rate:.1} keyframes/s", mesh.triangles.len());
            Ok(())
        }
        Cmd::Synth { scene, keyframes, points, noise, ba_interval, seed, out, truth } => {
            let mut cfg = SessionConfig { seed, ..Default::default() };
            cfg.frontend.kind = FrontendKind::Synthetic;
            cfg.frontend.scene = scene.into();
            cfg.frontend.keyframes = keyframes;
            cfg.frontend.points_per_keyframe = points;
            cfg.frontend.noise_sigma = noise;
            cfg.frontend.ba_interval = ba_interval;
            cfg.validate()?;
            let f = build_frontend(&cfg)?;
            std::fs::write(&out, write_stream(&f.events)).with_context(|| format!("writing {}", out.display()))?;
            export_obj(&f.truth, &truth)?;
            eprintln!("{} events, ground truth {} triangles", f.events.len(), f.truth.triangles.len());
            Ok(())
        }
    }
}
