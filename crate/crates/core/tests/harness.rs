use meshtwin_core::contact::ArmError;
use meshtwin_core::evaluation::reference_mesh;
use meshtwin_core::geometry::Vec3;
use meshtwin_core::harness::wire::{to_line, ServerMsg};
use meshtwin_core::harness::*;
use meshtwin_core::mesh_io::obj_string;
use meshtwin_core::slam::{write_stream, Pose};
use proptest::prelude::*;

const TICK: f64 = 0.004;

fn descent(latency: f64) -> SessionConfig {
    let mut c = SessionConfig::default();
    c.channel.latency = latency;
    c.arm.home = Some(vec![0.0, 0.0, 0.3]);
    c.duration = 3.5 + 2.0 * latency;
    c.operator.script = vec![ScriptStep::Jog { from: 1.0, until: 4.0, velocity: [0.0, 0.0, -0.1] }];
    c
}

fn idle() -> SessionConfig {
    let mut c = SessionConfig::default();
    c.duration = 1000.0;
    c
}

fn empty_frontend() -> Frontend {
    Frontend { events: Vec::new(), truth: platform() }
}

/// Time the descending sphere (radius 0.05, from z = 0.3 at 0.1 m/s from
/// t = 1 s, one jog per tick) first has gap <= 0.020 above z = 0.
fn analytic_onset() -> f64 {
    let mut k = 0u32;
    loop {
        let z = 0.3 - 0.1 * TICK * (k + 1) as f64;
        if z - 0.05 <= 0.020 {
            return 1.0 + k as f64 * TICK;
        }
        k += 1;
    }
}

#[test]
fn zero_latency_contacts_coincide() {
    let m = run_session(descent(0.0)).unwrap();
    assert_eq!(m.contacts.len(), 1, "{}", m.csv());
    let r = &m.contacts[0];
    assert!(r.lead().unwrap().abs() <= TICK + 1e-9, "{}", m.csv());
    assert!((seconds(r.local_time.unwrap()) - analytic_onset()).abs() <= TICK + 1e-9);
}

#[test]
fn half_second_latency_gives_one_second_lead() {
    let m = run_session(descent(0.5)).unwrap();
    assert_eq!(m.contacts.len(), 1);
    let lead = m.contacts[0].lead().unwrap();
    assert!((lead - 1.0).abs() <= TICK + 1e-9, "lead {lead}");
}

#[test]
fn stop_quiesces_both_twins() {
    let mut c = descent(0.3);
    c.operator.script.push(ScriptStep::Stop { at: 2.0 });
    c.duration = 6.0;
    let mut s = Session::new(c).unwrap();
    let m = s.run().unwrap();
    assert!(m.contacts.is_empty(), "{}", m.csv());
    let last = s.follower_trajectory().last().unwrap().0;
    assert!(seconds(last) < 2.0 + 0.3 + TICK, "{}", seconds(last));
    let zl = s.local_state().positions[2];
    let zf = s.follower_state().positions[2];
    assert!((zl - 0.2).abs() < 1e-6 && (zf - zl).abs() < 1e-12, "{zl} {zf}");
    assert!(s.follower_state().velocities.iter().all(|v| *v == 0.0));
}

#[test]
fn pose_stream_is_rate_limited_latest_wins() {
    let mut s = Session::with_frontend(idle(), empty_frontend()).unwrap();
    let pose = |k: u32| Pose::look_at(Vec3::new(1.0, k as f64 * 0.01, 1.0), Vec3::zeros(), Vec3::z());
    let mut sent = 0;
    while s.now() < 1_000_000 {
        // 100 poses over one second, offered at 10 ms spacing.
        while sent < 100 && micros(sent as f64 * 0.01) <= s.now() {
            s.push_command(OperatorCommand::CameraPose(pose(sent)));
            sent += 1;
        }
        s.step().unwrap();
    }
    for _ in 0..20 {
        s.step().unwrap();
    }
    let m = s.metrics();
    assert_eq!(m.poses_offered, 100);
    assert!(m.poses_applied <= 31, "{}", m.poses_applied);
    assert_eq!(*s.render_camera(), pose(99));
}

#[test]
fn identity_pose_sets_render_camera() {
    let mut s = Session::with_frontend(idle(), empty_frontend()).unwrap();
    s.push_command(OperatorCommand::CameraPose(Pose::look_at(Vec3::new(1.0, 1.0, 1.0), Vec3::zeros(), Vec3::z())));
    s.step().unwrap();
    s.stream_operator_pose(Pose::identity());
    for _ in 0..10 {
        s.step().unwrap();
    }
    assert_eq!(s.render_camera().translation, Vec3::zeros());
    assert_eq!(s.render_camera().rotation_matrix(), nalgebra::Matrix3::identity());
}

#[test]
fn camera_stream_never_perturbs_follower() {
    let plain = {
        let mut s = Session::new(descent(0.5)).unwrap();
        s.run().unwrap();
        s.follower_trajectory().to_vec()
    };
    let mut c = descent(0.5);
    c.operator.script.push(ScriptStep::CameraSweep { from: 0.0, until: 4.0, rate: 90.0, radius: 1.5, height: 1.0 });
    let mut s = Session::new(c).unwrap();
    let m = s.run().unwrap();
    assert!(m.poses_applied > 50);
    assert!(!plain.is_empty());
    assert_eq!(s.follower_trajectory(), &plain[..]);
}

#[test]
fn metrics_csv_is_deterministic() {
    let mut c = descent(0.2);
    c.channel.jitter = 0.05;
    c.frontend.noise_sigma = 0.002;
    c.seed = 9;
    let a = run_session(c.clone()).unwrap().csv();
    let b = run_session(c).unwrap().csv();
    assert_eq!(a, b);
    assert!(a.starts_with(METRICS_HEADER));
    assert!(a.lines().count() >= 2);
}

#[test]
fn file_frontend_matches_synthetic() {
    let synth = SessionConfig::default();
    let fe = build_frontend(&synth).unwrap();
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("stream.txt"), write_stream(&fe.events)).unwrap();
    std::fs::write(dir.path().join("truth.obj"), obj_string(&fe.truth)).unwrap();
    let toml = "duration = 4.5\n[channel]\nlatency = 0.25\n[arm]\nhome = [0.0, 0.0, 0.3]\n\
                [frontend]\nkind = \"file\"\npath = \"stream.txt\"\nground_truth = \"truth.obj\"\n\
                [[operator.script]]\nkind = \"jog\"\nfrom = 1.0\nuntil = 4.0\nvelocity = [0.0, 0.0, -0.1]\n";
    std::fs::write(dir.path().join("session.toml"), toml).unwrap();
    let from_file = SessionConfig::load(&dir.path().join("session.toml")).unwrap();
    let mut direct = descent(0.25);
    direct.duration = 4.5;
    let a = run_session(from_file).unwrap();
    let b = run_session(direct).unwrap();
    assert_eq!(a.csv(), b.csv());
    assert_eq!(a.contacts.len(), 1);
}

#[test]
fn first_publish_activates_haptics() {
    let mut c = idle();
    c.arm.home = Some(vec![0.0, 0.0, 0.06]);
    let mut s = Session::with_frontend(c, empty_frontend()).unwrap();
    s.step().unwrap();
    assert!(s.local_events().is_empty());
    assert_eq!(s.snapshot_cell().version(), None);
    let mut floor = platform();
    floor.version = 1;
    s.publish_mesh_update(floor).unwrap();
    s.step().unwrap();
    assert!(s.local_events().iter().any(|e| e.has_force() && e.mesh_version == 1));
}

#[test]
fn reference_swap_within_budget_and_stale_rejected() {
    let mut s = Session::with_frontend(idle(), empty_frontend()).unwrap();
    s.enable_ui();
    let mut mesh = reference_mesh();
    mesh.version = 5;
    let n = mesh.triangles.len();
    assert_eq!(n, 22_998);
    let dt = s.publish_mesh_update(mesh.clone()).unwrap();
    assert!(dt.as_secs_f64() <= 0.100, "{dt:?}");
    assert_eq!(s.latest_obj().unwrap().lines().filter(|l| l.starts_with("f ")).count(), n);
    let msgs = s.drain_outbox();
    assert!(matches!(msgs.as_slice(), [ServerMsg::Mesh { version: 5, triangles, .. }] if *triangles == n));

    mesh.version = 5;
    assert!(s.publish_mesh_update(mesh.clone()).is_err());
    mesh.version = 3;
    assert!(s.publish_mesh_update(mesh).is_err());
    assert_eq!(s.snapshot_cell().version(), Some(5));
    assert!(s.drain_outbox().is_empty());
}

#[test]
fn step_in_flight_keeps_its_snapshot() {
    let mut s = Session::with_frontend(idle(), empty_frontend()).unwrap();
    let mut a = platform();
    a.version = 1;
    s.publish_mesh_update(a).unwrap();
    let held = s.snapshot_cell().load().unwrap();
    let mut b = platform();
    b.version = 2;
    s.publish_mesh_update(b).unwrap();
    assert_eq!(held.version(), 1);
    assert_eq!(s.snapshot_cell().load().unwrap().version(), 2);
}

#[test]
fn idle_session_runs_faster_than_real_time() {
    let mut s = Session::with_frontend(idle(), empty_frontend()).unwrap();
    let rtf = s.measure_rtf(0.2).unwrap();
    assert!(rtf >= 1.0, "{rtf}");
}

#[test]
fn paced_session_tracks_wall_clock() {
    let mut s = Session::with_frontend(idle(), empty_frontend()).unwrap();
    s.set_paced(true);
    let t0 = std::time::Instant::now();
    let rtf = s.measure_rtf(0.5).unwrap();
    let wall = t0.elapsed().as_secs_f64();
    assert!((rtf - 1.0).abs() <= 0.05, "{rtf}");
    assert!((seconds(s.now()) / wall - 1.0).abs() <= 0.05);
}

#[test]
fn ui_messages_are_single_json_lines() {
    let mut c = descent(0.1);
    c.operator.script.push(ScriptStep::Camera { at: 0.5, eye: [1.0, 1.0, 1.0], target: [0.0, 0.0, 0.0] });
    let mut s = Session::new(c).unwrap();
    s.enable_ui();
    s.run().unwrap();
    let msgs = s.drain_outbox();
    let kinds: Vec<String> = msgs
        .iter()
        .map(|m| {
            let line = to_line(m);
            assert_eq!(line.matches('\n').count(), 1);
            serde_json::from_str::<serde_json::Value>(&line).unwrap()["t"].as_str().unwrap().to_string()
        })
        .collect();
    for k in ["mesh", "state", "contact"] {
        assert!(kinds.iter().any(|x| x == k), "{k}");
    }
    let sides: Vec<&str> = msgs
        .iter()
        .filter_map(|m| match m {
            ServerMsg::Contact(c) => Some(c.side.as_str()),
            _ => None,
        })
        .collect();
    assert!(sides.contains(&"local") && sides.contains(&"echo"));
    assert!(s.texture_keyframe().is_some());
}

#[test]
fn config_errors_surface_by_field() {
    let mut c = SessionConfig::default();
    c.haptics.rate = -1.0;
    match Session::new(c) {
        Err(SessionError::Config(ConfigError::Invalid { field, .. })) => assert_eq!(field, "haptics.rate"),
        other => panic!("{:?}", other.err()),
    }
    let mut c = SessionConfig::default();
    c.arm.home = Some(vec![0.0; 7]);
    assert!(matches!(Session::new(c), Err(SessionError::Arm(ArmError::WrongLength { expected: 3, got: 7 }))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn channel_is_fifo(seed in 0u64..1000, latency in 0.0f64..0.5, jitter in 0.0f64..0.3,
                       gaps in proptest::collection::vec(0u64..20_000, 1..60)) {
        let p = ChannelParams { latency, jitter, ..Default::default() };
        let mut ch = DelayChannel::new(&p, seed);
        let mut t = 0;
        let mut sent = Vec::new();
        for (i, g) in gaps.iter().enumerate() {
            t += g;
            let at = ch.send(t, i).unwrap();
            prop_assert!(at >= t + micros(latency));
            sent.push(at);
        }
        prop_assert!(sent.windows(2).all(|w| w[0] <= w[1]));
        let mut got = Vec::new();
        let mut now = 0;
        while got.len() < gaps.len() {
            now += 4_000;
            for e in ch.deliver(now) {
                prop_assert!(e.deliver_at <= now);
                got.push(e.msg);
            }
        }
        prop_assert_eq!(got, (0..gaps.len()).collect::<Vec<_>>());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn lead_is_nonnegative_without_jitter(ticks in 0u64..150, frac in prop_oneof![Just(0.0), 0.0f64..1.0], seed in 0u64..100) {
        // Each hop is delivered on the first tick at or after send + L, so an
        // unaligned latency adds up to one tick per direction.
        let latency = (ticks as f64 + frac) * TICK;
        let mut c = descent(latency);
        c.seed = seed;
        let m = run_session(c).unwrap();
        prop_assert!(!m.contacts.is_empty());
        let slack = if frac == 0.0 { TICK } else { 2.0 * TICK };
        for r in &m.contacts {
            let lead = r.lead().unwrap();
            prop_assert!(lead >= 0.0);
            prop_assert!(lead >= 2.0 * latency - 1e-6 && lead <= 2.0 * latency + slack + 1e-6, "{} vs {}", lead, latency);
        }
    }
}
