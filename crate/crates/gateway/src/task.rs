//! Scripted cube tasks on the tabletop.
//!
//! The grasp is a proxy: the cube attaches when the physical gripper closes
//! below a threshold near the cube center, follows the tool rigidly, and drops
//! flat onto the table when the gripper opens past a higher threshold.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use armtwin_core::kinematics::{KinematicChain, Pose};
use armtwin_core::session::{Session, SessionConfig, TraceItem};
use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{GatewayError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Marker {
    A,
    B,
    C,
    D,
}

impl FromStr for Marker {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Marker::A),
            "B" => Ok(Marker::B),
            "C" => Ok(Marker::C),
            "D" => Ok(Marker::D),
            _ => Err(GatewayError::Task(format!("unknown marker {s:?}"))),
        }
    }
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Translate,
    Rotate,
}

impl FromStr for TaskKind {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "translate" => Ok(TaskKind::Translate),
            "rotate" => Ok(TaskKind::Rotate),
            _ => Err(GatewayError::Task(format!("unknown task {s:?}"))),
        }
    }
}

/// Table, marker and grasp parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskGeometry {
    /// Marker centers on the table plane, `[x, y]` in meters. Evenly spaced
    /// along the table's long axis by convention.
    pub markers: [[f64; 2]; 4],
    /// height of the table surface
    pub table_z: f64,
    pub cube_size: f64,
    pub grasp_threshold: f64,
    pub attach_below_mm: f64,
    pub detach_above_mm: f64,
    pub success_radius: f64,
    pub rotate_target_deg: f64,
    pub rotate_tolerance_deg: f64,
}

impl Default for TaskGeometry {
    fn default() -> Self {
        Self {
            markers: [[-0.375, 0.45], [-0.125, 0.45], [0.125, 0.45], [0.375, 0.45]],
            table_z: 0.05,
            cube_size: 0.06,
            grasp_threshold: 0.02,
            attach_below_mm: 60.0,
            detach_above_mm: 80.0,
            success_radius: 0.02,
            rotate_target_deg: 90.0,
            rotate_tolerance_deg: 10.0,
        }
    }
}

impl TaskGeometry {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GatewayError::Config(format!("task: {m}")));
        if self.markers.iter().flatten().any(|v| !v.is_finite()) {
            return bad("marker coordinates must be finite");
        }
        for i in 0..4 {
            for j in i + 1..4 {
                if self.markers[i] == self.markers[j] {
                    return bad("markers must be distinct");
                }
            }
        }
        if !(self.cube_size > 0.0 && self.grasp_threshold > 0.0 && self.success_radius > 0.0) {
            return bad("sizes and thresholds must be positive");
        }
        if self.attach_below_mm.partial_cmp(&self.detach_above_mm) != Some(std::cmp::Ordering::Less) {
            return bad("attach threshold must lie below the detach threshold");
        }
        Ok(())
    }

    /// Center of a cube resting on `marker`.
    pub fn cube_home(&self, marker: Marker) -> Vector3<f64> {
        let [x, y] = self.markers[marker as usize];
        Vector3::new(x, y, self.table_z + self.cube_size / 2.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub from: Marker,
    /// Destination for translate; the rotate task turns the cube in place.
    pub to: Marker,
}

impl TaskSpec {
    pub fn validate(&self, chain: &KinematicChain, geometry: &TaskGeometry) -> Result<()> {
        if self.kind == TaskKind::Translate && self.from == self.to {
            return Err(GatewayError::Task("translate needs two distinct markers".into()));
        }
        for m in [self.from, self.to] {
            let p = geometry.cube_home(m);
            if !chain.reach_check(&p) {
                return Err(GatewayError::Task(format!(
                    "marker {m} at ({:.3}, {:.3}) is outside the arm's reach",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }
}

/// Cube pose proxy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimCube {
    pub pose: Pose,
    /// cube pose in the tool frame while attached
    pub grip: Option<Pose>,
}

impl SimCube {
    pub fn attached(&self) -> bool {
        self.grip.is_some()
    }

    /// Heading of the cube's x axis about the vertical, degrees.
    pub fn yaw_deg(&self) -> f64 {
        yaw_of(&self.pose.orientation()).to_degrees()
    }
}

fn yaw_of(q: &UnitQuaternion<f64>) -> f64 {
    let x = q * Vector3::x();
    x.y.atan2(x.x)
}

fn wrap_deg(a: f64) -> f64 {
    let w = (a + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeState {
    pub pos: [f64; 3],
    pub yaw_deg: f64,
    pub attached: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: TaskKind,
    pub from: Marker,
    pub to: Marker,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub frames: u64,
    /// seconds of simulated time
    pub sim_time: f64,
    /// seconds during which the physical arm was moving
    pub robot_motion_time: f64,
    pub anomaly_count: u64,
    pub grasps: u32,
    pub final_cube: CubeState,
}

/// Replays `trace` with a cube on the start marker and judges the outcome.
pub fn run_task(
    chain: Arc<KinematicChain>,
    cfg: &SessionConfig,
    geometry: &TaskGeometry,
    spec: &TaskSpec,
    trace: &[TraceItem],
) -> Result<TaskReport> {
    geometry.validate()?;
    spec.validate(&chain, geometry)?;
    let mut session = Session::new(chain, cfg.clone())?;
    let start = geometry.cube_home(spec.from);
    let mut cube = SimCube {
        pose: Pose::from_translation(start),
        grip: None,
    };
    let rest_z = geometry.table_z + geometry.cube_size / 2.0;
    let mut grasps = 0u32;
    let mut anomaly_count = 0u64;
    let mut motion_time = 0.0;
    let mut frames = 0u64;
    let mut sim_time = 0.0;
    let dt = cfg.dt();

    for item in trace {
        let out = match item {
            TraceItem::Event { event, .. } => {
                // rejected events are part of the log, not task failures
                let _ = session.apply_event(*event);
                continue;
            }
            TraceItem::Hand(h) => session.tick(*h)?,
        };
        frames += 1;
        sim_time = out.time;
        anomaly_count += u64::from(out.anomaly);
        if out.physical.joint_velocities.iter().any(|v| v.abs() > 1e-9) {
            motion_time += dt;
        }
        let tcp = out.physical.tcp_pose;
        let openness = out.physical.gripper_openness;
        match cube.grip {
            None => {
                let near = (tcp.position() - cube.pose.position()).norm() <= geometry.grasp_threshold;
                if openness < geometry.attach_below_mm && near {
                    cube.grip = Some(tcp.inverse().compose(&cube.pose));
                    grasps += 1;
                }
            }
            Some(grip) => {
                cube.pose = tcp.compose(&grip);
                if openness > geometry.detach_above_mm {
                    // drops flat onto the table, keeping its heading
                    let p = cube.pose.position();
                    let yaw = yaw_of(&cube.pose.orientation());
                    cube.pose = Pose::new(
                        Vector3::new(p.x, p.y, rest_z),
                        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
                    );
                    cube.grip = None;
                }
            }
        }
    }

    let p = cube.pose.position();
    let final_cube = CubeState {
        pos: [p.x, p.y, p.z],
        yaw_deg: cube.yaw_deg(),
        attached: cube.attached(),
    };
    let reason = judge(spec, geometry, &cube, start, grasps);
    Ok(TaskReport {
        task: spec.kind,
        from: spec.from,
        to: spec.to,
        success: reason.is_none(),
        reason,
        frames,
        sim_time,
        robot_motion_time: motion_time,
        anomaly_count,
        grasps,
        final_cube,
    })
}

/// Failure reason, or `None` on success.
fn judge(
    spec: &TaskSpec,
    geometry: &TaskGeometry,
    cube: &SimCube,
    start: Vector3<f64>,
    grasps: u32,
) -> Option<String> {
    if grasps == 0 {
        return Some("never grasped".into());
    }
    if cube.attached() {
        return Some("cube still held at end of trace".into());
    }
    let p = cube.pose.position();
    let planar = |a: Vector3<f64>, b: Vector3<f64>| ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
    match spec.kind {
        TaskKind::Translate => {
            let goal = geometry.cube_home(spec.to);
            let miss = planar(p, goal);
            (miss > geometry.success_radius)
                .then(|| format!("cube released {miss:.3} m from marker {}", spec.to))
        }
        TaskKind::Rotate => {
            let drift = planar(p, start);
            let turned = wrap_deg(cube.yaw_deg());
            if (turned.abs() - geometry.rotate_target_deg).abs() > geometry.rotate_tolerance_deg {
                Some(format!(
                    "yaw changed {turned:.1} deg, needs {} +/- {} deg",
                    geometry.rotate_target_deg, geometry.rotate_tolerance_deg
                ))
            } else if drift > geometry.success_radius {
                Some(format!("cube drifted {drift:.3} m while turning"))
            } else {
                None
            }
        }
    }
}
