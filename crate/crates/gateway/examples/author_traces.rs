//! Writes the bundled cube-task traces.
//!
//! A scripted hand is driven in lockstep with a session at the default
//! configuration: it moves toward each waypoint at a steady pace, then holds
//! still until the physical arm and gripper have caught up. Only the hand
//! samples are recorded, so replaying the file reproduces the same run.
//!
//!     cargo run -p armtwin-gateway --example author_traces

use std::path::Path;
use std::sync::Arc;

use anyhow::{ensure, Result};
use armtwin_core::kinematics::{KinematicChain, Pose};
use armtwin_core::mapping::HandSample;
use armtwin_core::session::{FrameOutput, Session, SessionConfig, TraceItem};
use armtwin_gateway::config::GatewayConfig;
use armtwin_gateway::task::{run_task, Marker, TaskGeometry, TaskKind, TaskSpec};
use armtwin_gateway::trace::encode_trace;
use nalgebra::{UnitQuaternion, Vector3};

const HAND_SPEED: f64 = 0.06; // m/s
const TURN_RATE: f64 = 0.5; // rad/s
const OPEN: f64 = 1.0;
const CLOSED: f64 = 0.2;
const HOVER: f64 = 0.10; // above the cube center

struct Author {
    session: Session,
    items: Vec<TraceItem>,
    dt: f64,
    /// tool position the hand origin maps to
    tcp0: Vector3<f64>,
    hand: Vector3<f64>,
    yaw: f64,
    aperture: f64,
}

impl Author {
    fn new(chain: Arc<KinematicChain>, cfg: &SessionConfig) -> Result<Self> {
        let home = cfg.home.clone().unwrap_or_else(|| vec![0.0; chain.dof()]);
        let tcp0 = chain.tool_position(&home);
        Ok(Self {
            session: Session::new(chain, cfg.clone())?,
            items: Vec::new(),
            dt: cfg.dt(),
            tcp0,
            hand: Vector3::zeros(),
            yaw: 0.0,
            aperture: OPEN,
        })
    }

    fn emit(&mut self) -> Result<FrameOutput> {
        let t = self.items.len() as f64 * self.dt;
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw);
        let h = HandSample::new(Pose::new(self.hand, q), self.aperture, t)?;
        self.items.push(TraceItem::Hand(h));
        Ok(self.session.tick(h)?)
    }

    /// Holds the hand until both twins agree and the gripper has arrived.
    fn settle(&mut self) -> Result<()> {
        let mut calm = 0;
        for _ in 0..2000 {
            let out = self.emit()?;
            let gripper_done = (out.physical.gripper_openness - out.target.openness).abs() < 0.5;
            if out.overlap && !out.anomaly && gripper_done && out.lag_distance < 5e-4 {
                calm += 1;
                if calm >= 5 {
                    return Ok(());
                }
            } else {
                calm = 0;
            }
        }
        anyhow::bail!("arm never settled near {:?}", self.hand + self.tcp0)
    }

    fn move_to(&mut self, tool: Vector3<f64>) -> Result<()> {
        let goal = tool - self.tcp0;
        let step = HAND_SPEED * self.dt;
        loop {
            let d = goal - self.hand;
            if d.norm() <= step {
                self.hand = goal;
                self.emit()?;
                break;
            }
            self.hand += d.normalize() * step;
            self.emit()?;
        }
        self.settle()
    }

    fn turn_to(&mut self, yaw: f64) -> Result<()> {
        let step = TURN_RATE * self.dt;
        while (yaw - self.yaw).abs() > step {
            self.yaw += step * (yaw - self.yaw).signum();
            self.emit()?;
        }
        self.yaw = yaw;
        self.emit()?;
        self.settle()
    }

    fn grip(&mut self, aperture: f64) -> Result<()> {
        self.aperture = aperture;
        self.settle()
    }
}

fn translate(chain: Arc<KinematicChain>, cfg: &SessionConfig, g: &TaskGeometry, from: Marker, to: Marker) -> Result<Vec<TraceItem>> {
    let mut a = Author::new(chain, cfg)?;
    let up = Vector3::z() * HOVER;
    let (src, dst) = (g.cube_home(from), g.cube_home(to));
    a.settle()?;
    a.move_to(src + up)?;
    a.move_to(src)?;
    a.grip(CLOSED)?;
    a.move_to(src + up)?;
    a.move_to(dst + up)?;
    a.move_to(dst)?;
    a.grip(OPEN)?;
    a.move_to(dst + up)?;
    Ok(a.items)
}

fn rotate(chain: Arc<KinematicChain>, cfg: &SessionConfig, g: &TaskGeometry, at: Marker) -> Result<Vec<TraceItem>> {
    let mut a = Author::new(chain, cfg)?;
    let up = Vector3::z() * HOVER;
    let lift = Vector3::z() * 0.03;
    let cube = g.cube_home(at);
    a.settle()?;
    a.move_to(cube + up)?;
    a.move_to(cube)?;
    a.grip(CLOSED)?;
    a.move_to(cube + lift)?;
    a.turn_to(std::f64::consts::FRAC_PI_2)?;
    a.move_to(cube)?;
    a.grip(OPEN)?;
    a.move_to(cube + up)?;
    Ok(a.items)
}

fn main() -> Result<()> {
    let cfg = GatewayConfig::default();
    let chain = Arc::new(cfg.load_chain()?);
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("traces");
    std::fs::create_dir_all(&dir)?;

    let jobs = [
        (
            "translate_B_C.ndjson",
            TaskSpec { kind: TaskKind::Translate, from: Marker::B, to: Marker::C },
        ),
        (
            "rotate_B.ndjson",
            TaskSpec { kind: TaskKind::Rotate, from: Marker::B, to: Marker::B },
        ),
    ];
    for (file, spec) in jobs {
        let items = match spec.kind {
            TaskKind::Translate => translate(chain.clone(), &cfg.session, &cfg.task, spec.from, spec.to)?,
            TaskKind::Rotate => rotate(chain.clone(), &cfg.session, &cfg.task, spec.from)?,
        };
        let report = run_task(chain.clone(), &cfg.session, &cfg.task, &spec, &items)?;
        println!("{file}: {}", serde_json::to_string(&report)?);
        ensure!(report.success, "{file} does not complete its task");
        std::fs::write(dir.join(file), encode_trace(&items))?;
    }
    Ok(())
}
