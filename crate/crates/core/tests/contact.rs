use std::sync::Arc;
use std::time::Instant;

use meshtwin_core::contact::arm::{ArmModel, ArmState, JointKind};
use meshtwin_core::contact::bvh::{Bvh, Proximity, LEAF_SIZE};
use meshtwin_core::contact::{haptic_step, step_spheres, HapticParams, HapticSnapshot, SnapshotCell, Sphere};
use meshtwin_core::evaluation::reference_mesh;
use meshtwin_core::geometry::{closest_point_on_triangle, Vec3};
use meshtwin_core::mesh::SurfaceMesh;
use nalgebra::Matrix4;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ONE_JOINT: &str = r#"
[[joints]]
kind = "revolute"
axis = [0.0, 0.0, 1.0]
limits = [-4.0, 4.0]

[end_effector]
center = [1.0, 0.0, 0.0]
radius = 0.05
"#;

#[test]
fn quarter_turn_about_z() {
    let a = ArmModel::from_toml_str(ONE_JOINT).unwrap();
    let s = a.forward_kinematics(&[std::f64::consts::FRAC_PI_2]).unwrap();
    assert!((s[0].center - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn zero_configuration_is_home() {
    let a = ArmModel::seven_dof();
    let ee = a.end_effector_position(&[0.0; 7]).unwrap();
    // All joint frames stacked along +z: origins sum to 1.06, plus 0.06 tool offset.
    assert!((ee - Vec3::new(0.0, 0.0, 1.12)).norm() < 1e-12);
}

/// Homogeneous matrices built by hand: translate, then rotate (Rodrigues)
/// or slide along the axis.
fn naive_fk(a: &ArmModel, q: &[f64]) -> Vec<Vec3> {
    let mut frames = vec![a.base.to_homogeneous()];
    let mut t = frames[0];
    for (j, &x) in a.joints.iter().zip(q) {
        let mut tr = Matrix4::identity();
        tr[(0, 3)] = j.origin.x;
        tr[(1, 3)] = j.origin.y;
        tr[(2, 3)] = j.origin.z;
        let k = j.axis.into_inner();
        let mut m = Matrix4::identity();
        match j.kind {
            JointKind::Revolute => {
                let (s, c) = x.sin_cos();
                let kx = [[0.0, -k.z, k.y], [k.z, 0.0, -k.x], [-k.y, k.x, 0.0]];
                for r in 0..3 {
                    for col in 0..3 {
                        let mut kk = 0.0;
                        for i in 0..3 {
                            kk += kx[r][i] * kx[i][col];
                        }
                        let id = if r == col { 1.0 } else { 0.0 };
                        m[(r, col)] = id + s * kx[r][col] + (1.0 - c) * kk;
                    }
                }
            }
            JointKind::Prismatic => {
                m[(0, 3)] = k.x * x;
                m[(1, 3)] = k.y * x;
                m[(2, 3)] = k.z * x;
            }
        }
        t = t * tr * m;
        frames.push(t);
    }
    a.proxies
        .iter()
        .map(|p| {
            let h = frames[p.link] * nalgebra::Vector4::new(p.center.x, p.center.y, p.center.z, 1.0);
            Vec3::new(h.x, h.y, h.z)
        })
        .collect()
}

#[test]
fn forward_kinematics_matches_naive_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for a in [ArmModel::seven_dof(), ArmModel::gantry()] {
        for _ in 0..200 {
            let q: Vec<f64> = a.joints.iter().map(|j| rng.gen_range(j.limits.0..=j.limits.1)).collect();
            let got = a.forward_kinematics(&q).unwrap();
            let want = naive_fk(&a, &q);
            for (g, w) in got.iter().zip(&want) {
                assert!((g.center - w).norm() < 1e-12, "{:?} vs {:?}", g.center, w);
            }
        }
    }
}

#[test]
fn arm_state_is_clamped_on_ingest() {
    let a = ArmModel::gantry();
    let s = ArmState::new(&a, vec![5.0, -5.0, 0.5], vec![0.0; 3], 0.0).unwrap();
    assert_eq!(s.positions, vec![2.0, -2.0, 0.5]);
}

fn brute_nearest(mesh: &SurfaceMesh, p: &Vec3) -> Option<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for i in 0..mesh.triangles.len() {
        if mesh.normals[i] == Vec3::zeros() {
            continue;
        }
        let [a, b, c] = mesh.triangle(i);
        let d = (closest_point_on_triangle(p, a, b, c) - p).norm_squared();
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((i as u32, d));
        }
    }
    best.map(|(t, d)| (t, d.sqrt()))
}

fn random_soup(seed: u64, n: usize) -> SurfaceMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vec::new();
    let mut t = Vec::new();
    for i in 0..n {
        let c = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        for _ in 0..3 {
            v.push(c + Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)));
        }
        t.push([3 * i as u32, 3 * i as u32 + 1, 3 * i as u32 + 2]);
    }
    SurfaceMesh::from_triangles(0, v, t)
}

#[test]
fn bvh_matches_brute_force_on_random_soup() {
    let mesh = random_soup(1, 2000);
    let bvh = Bvh::build(&mesh);
    bvh.validate(&mesh).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let c = Vec3::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        let r = rng.gen_range(0.01..0.2);
        let (bt, bd) = brute_nearest(&mesh, &c).unwrap();
        let Proximity::Nearest { nearest, gap } = bvh.query_proximity(&c, r) else { panic!() };
        assert_eq!(nearest.triangle, bt);
        assert_eq!(gap, bd - r);
    }
}

#[test]
fn bvh_ties_go_to_lowest_id() {
    // Grid vertices are shared by up to six triangles at equal distance.
    let mesh = SurfaceMesh::grid(12, 9, 1.0, 0.0);
    let bvh = Bvh::build(&mesh);
    for v in &mesh.vertices {
        for h in [0.0, 0.05, 0.3] {
            let p = v + Vec3::new(0.0, 0.0, h);
            let (bt, _) = brute_nearest(&mesh, &p).unwrap();
            assert_eq!(bvh.nearest(&p).unwrap().triangle, bt);
        }
    }
}

#[test]
fn bvh_on_reference_mesh() {
    let mesh = reference_mesh();
    let t0 = Instant::now();
    let bvh = Bvh::build(&mesh);
    let build = t0.elapsed();
    assert!(build.as_millis() <= 100, "build took {build:?}");
    bvh.validate(&mesh).unwrap();
    assert!(bvh.nodes().iter().filter(|n| n.is_leaf()).all(|n| n.count as usize <= LEAF_SIZE));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..300 {
        let c = Vec3::new(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2), rng.gen_range(-0.2..0.6));
        assert_eq!(bvh.nearest(&c).unwrap().triangle, brute_nearest(&mesh, &c).unwrap().0);
    }
}

fn floor() -> Arc<SurfaceMesh> {
    let mut m = SurfaceMesh::grid(4, 4, 2.0, 0.0);
    for v in &mut m.vertices {
        v.x -= 1.0;
        v.y -= 1.0;
    }
    m.version = 1;
    Arc::new(m)
}

#[test]
fn descent_onto_floor_starts_force_at_min_depth() {
    let arm = ArmModel::gantry();
    let snap = HapticSnapshot::new(floor());
    let params = HapticParams::default();
    let tick = params.tick();
    let v = 0.1;
    let mut first = None;
    for k in 0..2000 {
        let t = k as f64 * tick;
        let z = 0.3 - v * t;
        let state = ArmState::new(&arm, vec![0.13, -0.27, z], vec![0.0, 0.0, -v], t).unwrap();
        let ev = haptic_step(&arm, &state, Some(&snap), &params).unwrap();
        if let Some(e) = ev.iter().find(|e| e.has_force()) {
            first = Some((z, *e));
            break;
        }
        // Before the first force, nothing is closer than min_depth.
        assert!(z > 0.070);
    }
    let (z, e) = first.expect("contact");
    assert!(z <= 0.070 && z > 0.070 - v * tick - 1e-12, "z = {z}");
    assert!(e.gap <= 0.020);
    assert!(e.force.cross(&e.normal).norm() < 1e-12 && e.force.dot(&e.normal) > 0.0);
}

#[test]
fn force_formula_and_far_proxy() {
    let bvh = Bvh::build(&floor());
    let params = HapticParams::default();
    let ev = step_spheres(&[Sphere { center: Vec3::new(0.2, 0.1, 0.069), radius: 0.05 }], &bvh, &params, 0.0);
    assert_eq!(ev.len(), 1);
    assert!((ev[0].gap - 0.019).abs() < 1e-12);
    assert_eq!(ev[0].force, Vec3::new(0.0, 0.0, 10.0));
    // Proximity band: zero force.
    let ev = step_spheres(&[Sphere { center: Vec3::new(0.2, 0.1, 0.08), radius: 0.05 }], &bvh, &params, 0.0);
    assert_eq!(ev.len(), 1);
    assert_eq!(ev[0].force, Vec3::zeros());
    let ev = step_spheres(&[Sphere { center: Vec3::new(0.2, 0.1, 1.0), radius: 0.05 }], &bvh, &params, 0.0);
    assert!(ev.is_empty());
}

#[test]
fn no_mesh_gives_no_events() {
    let arm = ArmModel::seven_dof();
    let s = ArmState::home(&arm);
    assert!(haptic_step(&arm, &s, None, &HapticParams::default()).unwrap().is_empty());
    let empty = HapticSnapshot::new(Arc::new(SurfaceMesh::empty(1)));
    assert!(haptic_step(&arm, &s, Some(&empty), &HapticParams::default()).unwrap().is_empty());
}

#[test]
fn step_uses_one_version_across_publishes() {
    let cell = SnapshotCell::new();
    let arm = ArmModel::seven_dof();
    let mut m = reference_mesh();
    m.version = 1;
    cell.publish(Arc::new(m.clone())).unwrap();
    let held = cell.load().unwrap();
    let mut q = vec![0.0; 7];
    q[1] = 1.4;
    q[3] = 1.2;
    let s = ArmState::new(&arm, q, vec![0.0; 7], 0.0).unwrap();
    m.version = 2;
    cell.publish(Arc::new(m)).unwrap();
    let ev = haptic_step(&arm, &s, Some(&held), &HapticParams { min_depth: 1.0, ..Default::default() }).unwrap();
    assert!(!ev.is_empty());
    assert!(ev.iter().all(|e| e.mesh_version == 1));
    let ev = haptic_step(&arm, &s, cell.load().as_deref(), &HapticParams { min_depth: 1.0, ..Default::default() }).unwrap();
    assert!(ev.iter().all(|e| e.mesh_version == 2));
}

#[test]
fn haptic_step_fits_the_tick_on_reference_mesh() {
    let arm = ArmModel::seven_dof();
    assert_eq!(arm.proxies.len(), 8);
    let snap = HapticSnapshot::new(Arc::new(reference_mesh()));
    let params = HapticParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut times = Vec::new();
    for k in 0..2000 {
        let q: Vec<f64> = arm.joints.iter().map(|j| rng.gen_range(j.limits.0..=j.limits.1)).collect();
        let s = ArmState::new(&arm, q, vec![0.0; 7], k as f64 * 0.004).unwrap();
        let t0 = Instant::now();
        let _ = haptic_step(&arm, &s, Some(&snap), &params).unwrap();
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let p99 = times[times.len() * 99 / 100];
    assert!(p99 <= 0.004, "p99 {p99}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contact_is_monotone_in_min_depth(
        x in -1.0f64..1.0, y in -1.0f64..1.0, z in -0.5f64..0.5,
        r in 0.01f64..0.1, d in 0.0f64..0.2, extra in 0.0f64..0.2,
    ) {
        let bvh = Bvh::build(&random_soup(7, 300));
        let s = [Sphere { center: Vec3::new(x, y, z), radius: r }];
        let lo = HapticParams { min_depth: d, ..Default::default() };
        let hi = HapticParams { min_depth: d + extra, ..Default::default() };
        let a = step_spheres(&s, &bvh, &lo, 0.0);
        let b = step_spheres(&s, &bvh, &hi, 0.0);
        if a.iter().any(|e| e.has_force()) {
            prop_assert!(b.iter().any(|e| e.has_force()));
        }
        for e in a.iter().chain(&b) {
            prop_assert!((e.normal.norm() - 1.0).abs() < 1e-12);
            prop_assert!(e.gap >= -r - 1e-12);
            if e.has_force() {
                prop_assert!(e.force.cross(&e.normal).norm() < 1e-9);
                prop_assert!(e.force.dot(&e.normal) > 0.0);
            }
        }
    }
}
