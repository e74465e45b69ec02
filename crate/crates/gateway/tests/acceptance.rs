//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the harness so the lines always print.

mod common;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use armtwin_core::batch::{round_trip, time_solves, unreachable_flag_rate, Execution, RoundTripSettings};
use armtwin_core::ik::smooth;
use armtwin_core::kinematics::{rotation_angle, JointConfig, KinematicChain, Pose};
use armtwin_core::mapping::{map_openness, Axis, HandSample, MappingState, MAX_OPENNESS_MM, MAX_SCALE, MIN_SCALE};
use armtwin_core::robot_sim::{RobotLimits, RobotSim};
use armtwin_core::session::{replay, Session, TraceItem};
use armtwin_gateway::bench::FRAME_BUDGET_MS;
use armtwin_gateway::config::GatewayConfig;
use armtwin_gateway::protocol::{ClientMessage, ErrorCode, Hello, Role, ServerMessage};
use armtwin_gateway::server::{self, Engine, Mailbox, Pacing, ServeOptions};
use armtwin_gateway::task::{run_task, Marker, TaskKind, TaskSpec};
use armtwin_gateway::trace::read_trace;
use common::*;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DT: f64 = 1.0 / 35.0;
const CASES: usize = 10_000;

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn defaults() -> (Arc<KinematicChain>, GatewayConfig) {
    let cfg = GatewayConfig::default();
    (Arc::new(cfg.load_chain().unwrap()), cfg)
}

// ---------------------------------------------------------------- IK

fn ik_budget() -> Verdict {
    let (chain, cfg) = defaults();
    let ik = &cfg.session.ik;
    if ik.population_size != 120 || ik.generations_per_frame != 3 {
        return Err(format!("default config is {}x{}", ik.population_size, ik.generations_per_frame));
    }
    let t = time_solves(&chain, ik, 1000, 0).map_err(|e| e.to_string())?;
    check(
        t.p99_ms <= FRAME_BUDGET_MS,
        format!(
            "p99 {:.3} ms (median {:.3}, max {:.3}) over {} solves, budget {:.3} ms",
            t.p99_ms, t.median_ms, t.max_ms, t.samples, FRAME_BUDGET_MS
        ),
    )
}

fn ik_round_trip() -> Verdict {
    let (chain, cfg) = defaults();
    let ik = &cfg.session.ik;
    let settings = RoundTripSettings::default();
    let rt = round_trip(&chain, ik, &settings, Execution::default()).map_err(|e| e.to_string())?;
    let flagged = unreachable_flag_rate(&chain, ik, 1000, 0, Execution::default()).map_err(|e| e.to_string())?;
    let tolerances_ok = ik.position_tolerance <= 1e-3 && ik.rotation_tolerance <= 0.5f64.to_radians();
    check(
        settings.targets == 1000 && settings.max_frames == 60 && tolerances_ok && rt.pass_rate() >= 0.99 && flagged == 1.0,
        format!(
            "{}/{} targets within 1 mm / 0.5 deg in <= {} frames ({:.1}%); {:.1}% of out-of-reach targets flagged",
            rt.passed(),
            settings.targets,
            settings.max_frames,
            100.0 * rt.pass_rate(),
            100.0 * flagged
        ),
    )
}

fn smoothing() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..CASES {
        let a: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = smooth(&JointConfig::new(a.clone()).unwrap(), &JointConfig::new(b.clone()).unwrap(), 0.5).unwrap();
        for i in 0..6 {
            worst = worst.max((s.as_slice()[i] - (a[i] + b[i]) / 2.0).abs());
        }
    }
    check(worst <= 1e-12, format!("{CASES} random pairs, worst midpoint error {worst:.1e}"))
}

// ---------------------------------------------------------------- mapping

fn rand_vec(rng: &mut ChaCha8Rng, r: f64) -> Vector3<f64> {
    Vector3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r))
}

fn rand_rot(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    loop {
        let q = Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if q.norm() > 0.1 {
            return UnitQuaternion::from_quaternion(q);
        }
    }
}

fn rand_pose(rng: &mut ChaCha8Rng) -> Pose {
    Pose::new(rand_vec(rng, 1.0), rand_rot(rng))
}

fn rand_hand(rng: &mut ChaCha8Rng) -> HandSample {
    let pose = rand_pose(rng);
    HandSample::new(pose, rng.random_range(0.0..1.0), 0.0).unwrap()
}

fn rand_axis(rng: &mut ChaCha8Rng) -> Axis {
    if rng.random_bool(0.5) {
        Axis::X
    } else {
        Axis::Y
    }
}

/// A mapping after a few random scale, flip, offset and freeze cycles.
fn rand_mapping(rng: &mut ChaCha8Rng) -> MappingState {
    let mut m = MappingState::new(&rand_hand(rng), rand_pose(rng));
    for _ in 0..rng.random_range(0..4) {
        let (h, g) = (rand_hand(rng), rand_pose(rng));
        m = match rng.random_range(0..4) {
            0 => m.set_scale(rng.random_range(-1.0..4.0), &h, g).unwrap(),
            1 => m.flip_axis(rand_axis(rng), &h, g).unwrap(),
            2 => m.set_rotation_offset(rand_rot(rng)),
            _ => m.freeze(&h).unfreeze(&h, g).unwrap(),
        };
    }
    m
}

fn pose_gap(a: &Pose, b: &Pose) -> f64 {
    (a.position() - b.position())
        .norm()
        .max(rotation_angle(&a.orientation(), &b.orientation()))
}

fn mapping_algebra() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut affine = 0.0f64;
    let mut continuity = 0.0f64;
    let mut involution = 0.0f64;
    let mut failures = Vec::new();
    for _ in 0..CASES {
        // affine with linear part scale * diag(mx, my, 1)
        let m = rand_mapping(&mut rng);
        let expect = Vector3::new(m.scale() * m.mirror_x().value(), m.scale() * m.mirror_y().value(), m.scale());
        if m.translation_gain() != expect {
            failures.push("gain");
        }
        let (h1, h2) = (rand_hand(&mut rng), rand_hand(&mut rng));
        let d_out = m.map_hand(&h2).pose.position() - m.map_hand(&h1).pose.position();
        let d_in = h2.pose.position() - h1.pose.position();
        affine = affine.max((d_out - expect.component_mul(&d_in)).norm());

        // clamp
        let s = rng.random_range(-10.0..10.0);
        let (h, g) = (rand_hand(&mut rng), rand_pose(&mut rng));
        let clamped = m.set_scale(s, &h, g).unwrap().scale();
        if clamped != s.clamp(MIN_SCALE, MAX_SCALE) || !(MIN_SCALE..=MAX_SCALE).contains(&clamped) {
            failures.push("clamp");
        }

        // involution
        let axis = rand_axis(&mut rng);
        let twice = m.flip_axis(axis, &h, g).unwrap().flip_axis(axis, &h, g).unwrap();
        if twice.mirror_x() != m.mirror_x() || twice.mirror_y() != m.mirror_y() {
            failures.push("involution");
        }
        let probe = rand_hand(&mut rng);
        let plain = m.set_scale(m.scale(), &h, g).unwrap();
        involution = involution.max(pose_gap(&twice.map_hand(&probe).pose, &plain.map_hand(&probe).pose));

        // continuity at every re-anchor
        let (h, current) = (rand_hand(&mut rng), rand_pose(&mut rng));
        let resumed = m.freeze(&rand_hand(&mut rng)).unfreeze(&h, current).unwrap();
        let rescaled = m.set_scale(rng.random_range(-1.0..4.0), &h, current).unwrap();
        let flipped = m.flip_axis(rand_axis(&mut rng), &h, current).unwrap();
        for next in [resumed, rescaled, flipped] {
            continuity = continuity.max(pose_gap(&next.map_hand(&h).pose, &current));
        }

        // frozen opacity
        let at_freeze = rand_hand(&mut rng);
        let held = m.map_hand(&at_freeze);
        let f = m.freeze(&at_freeze);
        for _ in 0..3 {
            if f.map_hand(&rand_hand(&mut rng)) != held {
                failures.push("opacity");
            }
        }
    }
    failures.dedup();
    let ok = failures.is_empty() && affine <= 1e-12 && continuity <= 1e-12 && involution <= 1e-12;
    check(
        ok,
        format!(
            "{CASES} cases; affine err {affine:.1e}, re-anchor jump {continuity:.1e}, involution err {involution:.1e}; clamp/opacity {}",
            if failures.is_empty() { "exact".to_string() } else { format!("broken: {failures:?}") }
        ),
    )
}

// ---------------------------------------------------------------- simulator

/// Two equal links folding about z: straightening a fold moves the tip along
/// a straight line, so the joint-space path is a straight TCP path.
fn folding_chain(link: f64) -> KinematicChain {
    let doc = format!(
        r#"{{"base": {{"t": [0, 0, 0], "q": [1, 0, 0, 0]}},
  "tool": {{"t": [{link}, 0, 0], "q": [1, 0, 0, 0]}},
  "reach_radius_m": {reach},
  "joints": [
    {{"axis": [0, 0, 1], "origin_t": [0, 0, 0], "origin_q": [1, 0, 0, 0], "limits": [-3, 3], "max_vel": 50}},
    {{"axis": [0, 0, 1], "origin_t": [{link}, 0, 0], "origin_q": [1, 0, 0, 0], "limits": [-3, 3], "max_vel": 50}}
  ]}}"#,
        reach = 2.0 * link
    );
    KinematicChain::from_json(&doc).unwrap()
}

fn instant_limits() -> RobotLimits {
    RobotLimits {
        command_latency: 0.0,
        ..RobotLimits::default()
    }
}

fn step_profile() -> Result<(f64, f64), String> {
    let link = 0.6;
    let theta = (1.0f64 - 1.0 / (2.0 * link)).acos();
    let chain = Arc::new(folding_chain(link));
    let start = JointConfig::new(vec![-theta, 2.0 * theta]).unwrap();
    let goal = JointConfig::zeros(2);
    let span = (chain.tool_position(goal.as_slice()) - chain.tool_position(start.as_slice())).norm();
    if (span - 1.0).abs() > 1e-12 {
        return Err(format!("step spans {span} m"));
    }
    let eps = GatewayConfig::default().session.overlap_epsilon;
    let mut sim = RobotSim::new(chain, instant_limits(), start).unwrap();
    sim.enqueue_command(&goal, 0.0, 0.0).unwrap();
    for k in 1..100_000 {
        if sim.step(DT).unwrap().q.max_abs_diff(&goal) <= eps {
            // triangular profile: accelerate over half, brake over half
            let closed_form = 2.0 * (span / 0.2f64).sqrt();
            return Ok((k as f64 * DT, closed_form));
        }
    }
    Err("never reached overlap".into())
}

/// Worst finite-difference TCP speed, speed change rate and gripper range
/// while streaming random waypoints to the reference arm.
fn random_extremes(seed: u64, seconds: f64) -> (f64, f64, (f64, f64)) {
    let chain = Arc::new(KinematicChain::reference_6dof());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_q =
        |rng: &mut ChaCha8Rng| JointConfig::new((0..6).map(|_| rng.random_range(-2.5..2.5)).collect()).unwrap();
    let mut sim = RobotSim::new(chain.clone(), RobotLimits::default(), random_q(&mut rng)).unwrap();
    let (mut speed_max, mut accel_max, mut grip) = (0.0f64, 0.0f64, (f64::INFINITY, f64::NEG_INFINITY));
    let mut prev = sim.sample().tcp_pose.position();
    let mut prev_speed = 0.0;
    let mut goal = random_q(&mut rng);
    let mut hold = 0.0;
    let mut openness = 0.0;
    for k in 0..(seconds / DT) as usize {
        if hold <= 0.0 {
            goal = random_q(&mut rng);
            openness = rng.random_range(0.0..MAX_OPENNESS_MM);
            hold = rng.random_range(0.1..4.0);
        }
        hold -= DT;
        let jitter: Vec<f64> = goal.as_slice().iter().map(|g| g + rng.random_range(-0.01..0.01)).collect();
        let cmd = chain.clamp_to_limits(&JointConfig::new(jitter).unwrap()).unwrap();
        sim.enqueue_command(&cmd, openness, k as f64 * DT).unwrap();
        let s = sim.step(DT).unwrap();
        let speed = (s.tcp_pose.position() - prev).norm() / DT;
        speed_max = speed_max.max(speed);
        accel_max = accel_max.max((speed - prev_speed).abs() / DT);
        grip = (grip.0.min(s.gripper_openness), grip.1.max(s.gripper_openness));
        prev = s.tcp_pose.position();
        prev_speed = speed;
    }
    (speed_max, accel_max, grip)
}

fn simulator_profile() -> Verdict {
    let (t, closed_form) = step_profile()?;
    let mut speed = 0.0f64;
    let mut accel = 0.0f64;
    for seed in 0..8 {
        let (s, a, _) = random_extremes(seed, 60.0);
        speed = speed.max(s);
        accel = accel.max(a);
    }
    let within = (t - closed_form).abs() <= 0.02 * closed_form;
    check(
        within && speed <= 2.0 * 1.01 && accel <= 0.2 * 1.05,
        format!(
            "1 m step overlaps at {t:.3} s vs {closed_form:.3} s closed form ({:+.2}%); random suite max speed {speed:.4} m/s, max accel {accel:.4} m/s^2",
            100.0 * (t - closed_form) / closed_form
        ),
    )
}

fn latency() -> Verdict {
    let mut seen = Vec::new();
    let mut ok = true;
    for l in [0.0, 0.1, 0.5, 1.0] {
        let limits = RobotLimits {
            command_latency: l,
            ..RobotLimits::default()
        };
        let home = JointConfig::zeros(6);
        let mut sim = RobotSim::new(Arc::new(KinematicChain::reference_6dof()), limits, home.clone()).unwrap();
        sim.enqueue_command(&JointConfig::new(vec![0.3, -0.2, 0.1, 0.0, 0.4, 0.0]).unwrap(), 0.0, 0.0)
            .unwrap();
        let mut first = None;
        for k in 1..1000usize {
            let start = (k - 1) as f64 * DT;
            if sim.step(DT).unwrap().q != home {
                first = Some((k, start));
                break;
            }
        }
        let Some((k, start)) = first else {
            return Err(format!("no response for L = {l}"));
        };
        // the responding tick is the first whose start is at or after L
        let expected = (1..).find(|&j| (j - 1) as f64 * DT >= l - 1e-9).unwrap();
        ok &= k == expected;
        seen.push(format!("L={l}: tick {k} (starts {start:.4} s)"));
    }
    check(ok, seen.join(", "))
}

fn gripper() -> Verdict {
    let chain = Arc::new(KinematicChain::reference_6dof());
    let mut sim = RobotSim::new(chain, instant_limits(), JointConfig::zeros(6)).unwrap();
    if sim.sample().gripper_openness != 0.0 {
        return Err("gripper does not start closed".into());
    }
    sim.enqueue_command(&JointConfig::zeros(6), MAX_OPENNESS_MM, 0.0).unwrap();
    let mut opened_at = None;
    let mut worst: f64 = 0.0;
    for k in 1..200 {
        let s = sim.step(DT).unwrap();
        let t = k as f64 * DT;
        worst = worst.max((s.gripper_openness - (100.0 * t).min(MAX_OPENNESS_MM)).abs());
        if opened_at.is_none() && s.gripper_openness == MAX_OPENNESS_MM {
            opened_at = Some(t);
        }
    }
    let Some(opened) = opened_at else {
        return Err("never fully opened".into());
    };
    // bounds: every aperture maps inside, and the random suite never leaves them
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mapped_ok = (0..CASES).all(|_| {
        let o = map_openness(rng.random_range(-5.0..5.0));
        (0.0..=MAX_OPENNESS_MM).contains(&o)
    }) && map_openness(f64::NAN) == 0.0;
    let (mut lo, mut hi) = gripper_range();
    for seed in 20..24 {
        let (_, _, (a, b)) = random_extremes(seed, 20.0);
        lo = lo.min(a);
        hi = hi.max(b);
    }
    check(
        (1.45..1.45 + DT).contains(&opened) && worst <= 1e-9 && mapped_ok && lo >= 0.0 && hi <= MAX_OPENNESS_MM,
        format!(
            "close->open completes in the tick ending {opened:.4} s (1.45 s at 100 mm/s, rate error {worst:.1e}); openness stayed in [{lo:.1}, {hi:.1}] mm"
        ),
    )
}

/// Gripper range over replays of the bundled traces.
fn gripper_range() -> (f64, f64) {
    let (chain, cfg) = defaults();
    let mut range = (f64::INFINITY, f64::NEG_INFINITY);
    for items in [translate_trace(), rotate_trace()] {
        for f in replay(chain.clone(), &cfg.session, &items).unwrap().frames {
            range = (range.0.min(f.physical.gripper_openness), range.1.max(f.physical.gripper_openness));
        }
    }
    range
}

// ---------------------------------------------------------------- end to end

fn lockstep_live(rt: &tokio::runtime::Runtime, items: &[TraceItem]) -> Result<String, String> {
    use futures_util::{SinkExt, StreamExt};
    use tokio_tungstenite::tungstenite::Message;
    rt.block_on(async {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let log = dir.path().join("live.ndjson");
        let (chain, cfg) = defaults();
        let opts = ServeOptions {
            pacing: Pacing::Input,
            log_path: Some(log.clone()),
            ..ServeOptions::default()
        };
        let server = server::start(chain, cfg.session, "127.0.0.1:0", opts)
            .await
            .map_err(|e| e.to_string())?;
        let mut ws = connect(server.local_addr()).await;
        send(&mut ws, &hello(Role::Operator)).await;
        recv(&mut ws).await;
        let hands = items.iter().filter(|i| matches!(i, TraceItem::Hand(_))).count() as u64;
        let (mut sink, mut stream) = ws.split();
        let reader = tokio::spawn(async move {
            while let Some(Ok(Message::Text(t))) = stream.next().await {
                if let Ok(ServerMessage::Frame(f)) = ServerMessage::decode(t.as_str()) {
                    if f.frame + 1 == hands {
                        return true;
                    }
                }
            }
            false
        });
        for item in items {
            sink.send(Message::text(to_message(item).encode())).await.map_err(|e| e.to_string())?;
        }
        let done = tokio::time::timeout(Duration::from_secs(120), reader)
            .await
            .map_err(|_| "live stream timed out".to_string())?
            .unwrap_or(false);
        server.shutdown().await;
        if !done {
            return Err("live stream ended early".into());
        }
        std::fs::read_to_string(log).map_err(|e| e.to_string())
    })
}

fn determinism(rt: &tokio::runtime::Runtime) -> Verdict {
    let (chain, cfg) = defaults();
    let mut notes = Vec::new();
    for (name, items) in [("translate", translate_trace()), ("rotate", rotate_trace()), ("with events", trace_with_events())] {
        let a = replay(chain.clone(), &cfg.session, &items).unwrap().to_ndjson();
        let b = replay(chain.clone(), &cfg.session, &items).unwrap().to_ndjson();
        if a != b {
            return Err(format!("{name}: two replays differ"));
        }
        notes.push(format!("{name} {} B", a.len()));
    }
    let items = trace_with_events();
    let offline = replay(chain.clone(), &cfg.session, &items).unwrap().to_ndjson();

    // clock pacing, one sample per tick
    let mut engine = Engine::new(Session::new(chain.clone(), cfg.session.clone()).unwrap());
    let mut mailbox = Mailbox::new(64);
    let mut clocked = String::new();
    for item in &items {
        match item {
            TraceItem::Event { event, .. } => mailbox.push_event(*event).unwrap(),
            TraceItem::Hand(h) => {
                mailbox.push_hand(*h).unwrap();
                let (events, hand) = mailbox.drain();
                clocked.push_str(&engine.step(events, hand).unwrap().unwrap().log_line());
                clocked.push('\n');
            }
        }
    }
    let live = lockstep_live(rt, &items)?;
    check(
        clocked == offline && live == offline,
        format!(
            "replays byte-identical ({}); clock-paced mailbox {}; streamed over a socket {}",
            notes.join(", "),
            if clocked == offline { "matches" } else { "DIFFERS" },
            if live == offline { "matches" } else { "DIFFERS" }
        ),
    )
}

fn task_runner() -> Verdict {
    let (chain, cfg) = defaults();
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("traces");
    let mut notes = Vec::new();
    let mut ok = true;
    let mut timed = |label: &str, path: &str, spec: TaskSpec, mutate: bool, want: bool| {
        let started = Instant::now();
        let mut items = read_trace(&dir.join(path)).unwrap();
        if mutate {
            for item in &mut items {
                if let TraceItem::Hand(h) = item {
                    h.aperture = 1.0;
                }
            }
        }
        let r = run_task(chain.clone(), &cfg.session, &cfg.task, &spec, &items).unwrap();
        let wall = started.elapsed().as_secs_f64();
        let reason_ok = want || r.reason.as_deref().is_some_and(|s| !s.is_empty());
        ok &= r.success == want && reason_ok && wall < 10.0;
        notes.push(format!(
            "{label}: success={} {}in {wall:.2} s",
            r.success,
            r.reason.map(|s| format!("({s}) ")).unwrap_or_default()
        ));
    };
    timed(
        "translate B->C",
        "translate_B_C.ndjson",
        TaskSpec { kind: TaskKind::Translate, from: Marker::B, to: Marker::C },
        false,
        true,
    );
    timed(
        "rotate at B",
        "rotate_B.ndjson",
        TaskSpec { kind: TaskKind::Rotate, from: Marker::B, to: Marker::B },
        false,
        true,
    );
    timed(
        "translate without grasp",
        "translate_B_C.ndjson",
        TaskSpec { kind: TaskKind::Translate, from: Marker::B, to: Marker::C },
        true,
        false,
    );
    check(ok, notes.join("; "))
}

fn protocol(rt: &tokio::runtime::Runtime) -> Verdict {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut kinds = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(&dir).map_err(|e| e.to_string())?.map(|e| e.unwrap().path()).collect();
    entries.sort();
    for path in entries {
        let text = std::fs::read_to_string(&path).unwrap();
        let text = text.trim_end();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let again = if name.starts_with("client_") {
            ClientMessage::decode(text).map(|m| m.encode())
        } else {
            ServerMessage::decode(text).map(|m| m.encode())
        }
        .map_err(|e| format!("{name}: {e}"))?;
        if again != text {
            return Err(format!("{name} does not round-trip"));
        }
        let v: serde_json::Value = serde_json::from_str(text).unwrap();
        kinds.push(v["kind"].as_str().unwrap().to_string());
    }
    kinds.sort();
    kinds.dedup();
    let all = kinds == ["error", "event", "frame", "hand", "hello", "task_result"];

    let refused = rt.block_on(async {
        let (chain, cfg) = defaults();
        let server = server::start(chain, cfg.session, "127.0.0.1:0", ServeOptions::default())
            .await
            .unwrap();
        let mut ws = connect(server.local_addr()).await;
        send(&mut ws, &ClientMessage::Hello(Hello { version: 2, role: Role::Operator })).await;
        let reply = recv(&mut ws).await;
        let closed = recv(&mut ws).await.is_none();
        server.shutdown().await;
        matches!(reply, Some(ServerMessage::Error(e)) if e.code == ErrorCode::VersionMismatch) && closed
    });
    check(
        all && refused,
        format!(
            "golden round-trip for kinds {kinds:?}; version 2 hello {}",
            if refused { "refused and closed" } else { "NOT refused" }
        ),
    )
}

fn main() {
    // `cargo test -- --list` and filters are harness flags; nothing to list here
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let rt = tokio::runtime::Runtime::new().unwrap();
    let criteria: Vec<Criterion> = vec![
        ("IK budget", Box::new(ik_budget)),
        ("IK round-trip", Box::new(ik_round_trip)),
        ("Smoothing", Box::new(smoothing)),
        ("Mapping algebra", Box::new(mapping_algebra)),
        ("Simulator profile", Box::new(simulator_profile)),
        ("Latency", Box::new(latency)),
        ("Gripper", Box::new(gripper)),
        ("Determinism", Box::new(|| determinism(&rt))),
        ("Task runner", Box::new(task_runner)),
        ("Protocol", Box::new(|| protocol(&rt))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let started = Instant::now();
        let verdict = run();
        let secs = started.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
