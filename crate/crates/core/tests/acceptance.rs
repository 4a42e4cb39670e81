//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p meshtwin-core --test acceptance`.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use common::{check_delaunay, cube_distance};
use meshtwin_core::carving::{ray_traversal, ReconParams, Reconstruction};
use meshtwin_core::contact::{haptic_step, ArmModel, ArmState, HapticParams, HapticSnapshot};
use meshtwin_core::delaunay::{Triangulation, VertexId};
use meshtwin_core::evaluation::{completeness, precision, reference_mesh, sample_surface};
use meshtwin_core::geometry::{Aabb, Vec3};
use meshtwin_core::harness::*;
use meshtwin_core::mesh::SurfaceMesh;
use meshtwin_core::mesh_io::export_obj;
use meshtwin_core::slam::{orbit_trajectory, stream_bounds, synth_scene, FrontendEvent, Scene, SynthParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TICK: f64 = 0.004;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn apply(r: &mut Reconstruction, events: &[FrontendEvent]) -> Result<(), String> {
    for ev in events {
        let res = match ev {
            FrontendEvent::NewKeyframe { keyframe, new_points } => r.integrate_keyframe(keyframe, new_points),
            FrontendEvent::PointUpdate { id, position } => r.handle_point_update(*id, *position),
            FrontendEvent::PointRemoval { id } => r.handle_point_removal(*id),
        };
        res.map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn cube_stream(seed: u64, keyframes: usize, per_kf: usize, ba: bool) -> Vec<FrontendEvent> {
    let scene = Scene::new(vec![SurfaceMesh::cuboid(Vec3::zeros(), Vec3::repeat(0.5))]);
    let traj = orbit_trajectory(Vec3::zeros(), 2.5, keyframes, &[0.5, -0.4, 1.1, -1.0]);
    let params = SynthParams {
        points_per_keyframe: per_kf,
        noise_sigma: if ba { 0.002 } else { 0.0 },
        ba_interval: if ba { 3 } else { 0 },
        seed,
        ..Default::default()
    };
    synth_scene(&scene, &traj, &params).unwrap()
}

fn delaunay_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut checked = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(100..=500);
        let mut t = Triangulation::init_bounding(Vec3::zeros(), Vec3::repeat(1.0)).map_err(|e| e.to_string())?;
        let mut ids: Vec<VertexId> = Vec::new();
        for i in 0..n {
            let p = Vec3::new(rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99));
            ids.push(t.insert_point(p, Some(i as u64)).map_err(|e| format!("seed {seed}: {e}"))?);
            // Interleave removals.
            if i % 5 == 4 {
                let v = ids.swap_remove(rng.gen_range(0..ids.len()));
                t.remove_point(v).map_err(|e| format!("seed {seed}: {e}"))?;
            }
        }
        t.check_structure().map_err(|e| format!("seed {seed}: {e}"))?;
        check_delaunay(&t).map_err(|e| format!("seed {seed}: {e}"))?;
        checked += 1;
    }
    let dt = t0.elapsed().as_secs_f64();
    check(dt <= 60.0, format!("{checked}/50 runs pass, {dt:.1} s (limit 60 s)"))
}

fn carving_oracle() -> Outcome {
    let t0 = Instant::now();
    let bounds = Aabb { min: Vec3::repeat(-2.6), max: Vec3::repeat(2.6) };
    let mut rays = 0;
    for seed in 0..20u64 {
        let kfs = 8 + (seed as usize % 13);
        let events = cube_stream(seed, kfs, 300, seed % 2 == 1);
        let mut r = Reconstruction::new(bounds, ReconParams::default()).map_err(|e| e.to_string())?;
        apply(&mut r, &events)?;
        let batch = r.rebuild().map_err(|e| e.to_string())?;
        if r.free_set() != batch.free_set() {
            return Err(format!("seed {seed}: incremental FREE set differs from batch"));
        }
        let tri = r.triangulation();
        for (_, ray) in r.labeling().rays() {
            rays += 1;
            for t in ray_traversal(tri, &ray.camera, ray.target).map_err(|e| e.to_string())? {
                if !r.is_free(t) {
                    return Err(format!("seed {seed}: traversed {t:?} not FREE"));
                }
            }
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    check(dt <= 120.0, format!("20 scenes, {rays} rays checked, {dt:.1} s (limit 120 s)"))
}

fn orientation_failures(r: &Reconstruction, mesh: &SurfaceMesh) -> usize {
    let eps = 1e-6 * r.diameter();
    let tri = r.triangulation();
    (0..mesh.triangles.len())
        .filter(|&i| {
            let [a, b, c] = mesh.triangle(i);
            let g = (a + b + c) / 3.0;
            let n = mesh.normals[i];
            let front = tri.locate(&(g + eps * n)).map(|t| r.is_free(t)).unwrap_or(false);
            let back = tri.locate(&(g - eps * n)).map(|t| !r.is_free(t)).unwrap_or(false);
            !(front && back)
        })
        .count()
}

fn surface_orientation() -> Outcome {
    let mut total = 0;
    let mut bad = 0;
    let mut scenes = Vec::new();
    for seed in 0..4 {
        scenes.push(cube_stream(seed, 10, 300, seed % 2 == 1));
    }
    for kind in [SceneKind::Floor, SceneKind::Cube, SceneKind::CubeOnFloor] {
        let mut c = SessionConfig::default();
        c.frontend.scene = kind;
        scenes.push(build_frontend(&c).map_err(|e| e.to_string())?.events);
    }
    for events in &scenes {
        let mut r = Reconstruction::new(stream_bounds(events), ReconParams::default()).map_err(|e| e.to_string())?;
        apply(&mut r, events)?;
        let m = r.extract_surface();
        total += m.triangles.len();
        bad += orientation_failures(&r, &m);
    }
    check(bad == 0 && total > 0, format!("{} of {total} triangles oriented FREE-side out over {} scenes", total - bad, scenes.len()))
}

fn reconstruction_quality() -> Outcome {
    let h = 0.15;
    let gt = SurfaceMesh::cuboid(Vec3::zeros(), Vec3::repeat(h));
    let scene = Scene::new(vec![gt.clone()]);
    let traj = orbit_trajectory(Vec3::zeros(), 0.8, 12, &[0.5, -0.4, 1.1, -1.0]);
    let ev = synth_scene(&scene, &traj, &SynthParams { seed: 5, ..Default::default() }).map_err(|e| e.to_string())?;
    let mut r = Reconstruction::new(stream_bounds(&ev), ReconParams::default()).map_err(|e| e.to_string())?;
    apply(&mut r, &ev)?;
    let m = r.extract_surface();
    let p = precision(&m, &gt, 0.02, 10_000, 1).map_err(|e| e.to_string())?;
    let c = completeness(&m, &gt, 0.02, 10_000, 1).map_err(|e| e.to_string())?;
    // Same samples against the closed-form cube distance.
    let near = sample_surface(&m, 10_000, 1).iter().filter(|s| cube_distance(s, h) <= 0.02).count() as f64 / 100.0;
    check(
        p >= 99.0 && c >= 90.0 && (near - p).abs() < 1e-9,
        format!("precision {p:.2}% (>= 99), completeness {c:.2}% (>= 90), tau 0.02 m, n 10000"),
    )
}

fn descent(latency: f64, seed: u64) -> SessionConfig {
    let mut c = SessionConfig::default();
    c.seed = seed;
    c.channel.latency = latency;
    c.arm.home = Some(vec![0.0, 0.0, 0.3]);
    c.duration = 3.5 + 2.0 * latency;
    c.operator.script = vec![ScriptStep::Jog { from: 1.0, until: 4.0, velocity: [0.0, 0.0, -0.1] }];
    c
}

fn predictive_contact() -> Outcome {
    let mut s = Session::new(descent(0.0, 1)).map_err(|e| e.to_string())?;
    let mut prev_gap = f64::INFINITY;
    let mut hit = None;
    while s.step().map_err(|e| e.to_string())? {
        // Exact gap of the end-effector sphere above the plane z = 0.
        let gap = s.local_state().positions[2] - 0.05;
        if let Some(e) = s.local_events().iter().find(|e| e.has_force()) {
            hit = Some((gap, prev_gap, *e));
            break;
        }
        prev_gap = gap;
    }
    let (gap, prev, e) = hit.ok_or("no force event")?;
    let step = 0.1 * TICK;
    let parallel = e.force.cross(&e.normal).norm() <= 1e-12 * e.force.norm() && e.force.dot(&e.normal) > 0.0;
    let face_normal = (e.normal - Vec3::z()).norm() < 1e-9;
    check(
        gap <= 0.020 + 1e-12 && prev > 0.020 && gap > 0.020 - step - 1e-12 && parallel && face_normal && (e.gap - gap).abs() < 1e-9,
        format!("first force at gap {gap:.6} m (previous tick {prev:.6} m), force parallel to normal: {parallel}"),
    )
}

fn lead_law() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for l in [0.1, 0.5, 2.0] {
        for seed in 0..10 {
            let m = run_session(descent(l, seed)).map_err(|e| e.to_string())?;
            let leads: Vec<f64> = m.contacts.iter().filter_map(|r| r.lead()).collect();
            if leads.is_empty() || leads.len() != m.contacts.len() {
                return Err(format!("L {l} seed {seed}: unpaired contacts\n{}", m.csv()));
            }
            for lead in leads {
                worst = worst.max((lead - 2.0 * l).abs());
            }
            runs += 1;
        }
    }
    check(worst <= TICK + 1e-9, format!("{runs} runs, max |lead - 2L| = {:.3} ms (limit 4 ms)", worst * 1e3))
}

fn haptic_budget() -> Outcome {
    let arm = ArmModel::seven_dof();
    let snap = HapticSnapshot::new(Arc::new(reference_mesh()));
    let params = HapticParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut times = Vec::new();
    for k in 0..5000 {
        let q: Vec<f64> = arm.joints.iter().map(|j| rng.gen_range(j.limits.0..=j.limits.1)).collect();
        let s = ArmState::new(&arm, q, vec![0.0; arm.num_joints()], k as f64 * TICK).map_err(|e| e.to_string())?;
        let t0 = Instant::now();
        haptic_step(&arm, &s, Some(&snap), &params).map_err(|e| e.to_string())?;
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let p99 = times[times.len() * 99 / 100] * 1e3;
    check(
        p99 <= 4.0 && arm.proxies.len() == 8,
        format!("p99 {p99:.3} ms over 5000 steps, {} triangles, {} proxies (limit 4 ms)", snap.mesh.triangles.len(), arm.proxies.len()),
    )
}

fn keyframe_rate() -> Outcome {
    let events = cube_stream(3, 20, 300, false);
    let mut r = Reconstruction::new(Aabb { min: Vec3::repeat(-2.6), max: Vec3::repeat(2.6) }, ReconParams::default())
        .map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let mut n = 0;
    for ev in &events {
        if let FrontendEvent::NewKeyframe { keyframe, new_points } = ev {
            r.integrate_keyframe(keyframe, new_points).map_err(|e| e.to_string())?;
            n += 1;
        }
    }
    let rate = n as f64 / t0.elapsed().as_secs_f64();
    check(rate >= 15.0, format!("{rate:.1} keyframes/s over {n} keyframes x 300 points (>= 15)"))
}

fn export_budget() -> Outcome {
    let m = reference_mesh();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = dir.path().join("reference.obj");
    let mut best = f64::INFINITY;
    let mut size = 0;
    for _ in 0..5 {
        let t0 = Instant::now();
        size = export_obj(&m, &p).map_err(|e| e.to_string())?;
        best = best.min(t0.elapsed().as_secs_f64());
    }
    let mb = size as f64 / 1e6;
    check(
        best <= 0.060 && (0.7..=2.8).contains(&mb),
        format!("{} triangles in {:.1} ms (<= 60), {mb:.2} MB (0.7..2.8)", m.triangles.len(), best * 1e3),
    )
}

fn determinism() -> Outcome {
    let mut c = descent(0.3, 17);
    c.channel.jitter = 0.05;
    c.frontend.noise_sigma = 0.002;
    c.frontend.ba_interval = 3;
    c.operator.script.push(ScriptStep::CameraSweep { from: 0.0, until: 3.0, rate: 60.0, radius: 1.5, height: 1.0 });
    let a = run_session(c.clone()).map_err(|e| e.to_string())?.csv();
    let b = run_session(c).map_err(|e| e.to_string())?.csv();
    check(a == b && a.lines().count() > 1, format!("two runs, {} CSV bytes, identical: {}", a.len(), a == b))
}

fn headless() -> Outcome {
    // This binary links only the core crate; make sure it carries no server
    // or UI dependency.
    let manifest = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/Cargo.toml")).map_err(|e| e.to_string())?;
    let deps = manifest.split("[dependencies]").nth(1).unwrap_or("").split("\n[").next().unwrap_or("");
    let bad: Vec<&str> = ["axum", "tokio", "tungstenite", "hyper"].into_iter().filter(|d| deps.contains(d)).collect();
    check(bad.is_empty(), format!("core dependencies free of server/UI crates{}", if bad.is_empty() { String::new() } else { format!(": {bad:?}") }))
}

fn stress_rtf() -> String {
    let mut c = SessionConfig::default();
    c.arm.model = "seven_dof".into();
    c.duration = 2.0;
    let mut s = Session::with_frontend(c, Frontend { events: Vec::new(), truth: reference_mesh() }).unwrap();
    let mut m = reference_mesh();
    m.version = 1;
    s.publish_mesh_update(m).unwrap();
    let rtf = s.measure_rtf(10.0).unwrap();
    format!("unpaced stress run on the 22,998-triangle mesh, 8 proxies: RTF {rtf:.1}")
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("delaunay oracle", delaunay_oracle),
        ("carving oracle", carving_oracle),
        ("surface orientation", surface_orientation),
        ("reconstruction quality", reconstruction_quality),
        ("predictive contact", predictive_contact),
        ("predictive-lead law", lead_law),
        ("haptic step p99", haptic_budget),
        ("keyframe integration rate", keyframe_rate),
        ("OBJ export", export_budget),
        ("determinism", determinism),
        ("headless", headless),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t0 = Instant::now();
        let out = f();
        let secs = t0.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("PASS {name}: {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d} [{secs:.1} s]");
            }
        }
    }
    println!("INFO {}", stress_rtf());
    println!("{} passed, {failed} failed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
