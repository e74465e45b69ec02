//! Fixed-rate teleoperation loop: hand sample -> mapping -> IK -> twins.
//!
//! The virtual twin takes every reachable solution on the same tick. The
//! physical twin is a [`RobotSim`] that sees the same commands after the
//! configured latency.

use std::sync::Arc;

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::batch::mix_seed;
use crate::error::{Error, Result};
use crate::ik::{smooth, IkConfig, IkSolver};
use crate::kinematics::{JointConfig, KinematicChain, Pose};
use crate::mapping::{Axis, GripperTarget, HandSample, MappingState};
use crate::robot_sim::{RobotLimits, RobotSim, RobotState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Hz
    pub frame_rate: f64,
    /// rad, per joint
    pub overlap_epsilon: f64,
    pub ik: IkConfig,
    pub limits: RobotLimits,
    /// Initial configuration of both twins; all zeros when absent.
    pub home: Option<Vec<f64>>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            frame_rate: 35.0,
            overlap_epsilon: 0.01,
            ik: IkConfig::default(),
            limits: RobotLimits::default(),
            home: None,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::Validation("frame_rate must be positive".into()));
        }
        if !(self.overlap_epsilon.is_finite() && self.overlap_epsilon > 0.0) {
            return Err(Error::Validation("overlap_epsilon must be positive".into()));
        }
        if 1.0 / self.frame_rate > 0.1 {
            return Err(Error::Validation("frame_rate must be at least 10 Hz".into()));
        }
        self.ik.validate()?;
        self.limits.validate()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }
}

/// Operator command that changes the hand-to-gripper mapping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MappingEvent {
    Freeze,
    Unfreeze,
    SetScale(f64),
    FlipAxis(Axis),
    SetRotationOffset(UnitQuaternion<f64>),
}

/// Wire form: `"freeze"`, `"unfreeze"`, `{"scale":s}`, `{"flip":"x"}`,
/// `{"rotation_offset":[w,x,y,z]}`.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EventDoc {
    Word(String),
    Scale { scale: f64 },
    Flip { flip: String },
    Offset { rotation_offset: [f64; 4] },
}

impl Serialize for MappingEvent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let doc = match *self {
            MappingEvent::Freeze => EventDoc::Word("freeze".into()),
            MappingEvent::Unfreeze => EventDoc::Word("unfreeze".into()),
            MappingEvent::SetScale(scale) => EventDoc::Scale { scale },
            MappingEvent::FlipAxis(axis) => EventDoc::Flip {
                flip: axis.to_string(),
            },
            MappingEvent::SetRotationOffset(q) => EventDoc::Offset {
                rotation_offset: [q.w, q.i, q.j, q.k],
            },
        };
        doc.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MappingEvent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match EventDoc::deserialize(d)? {
            EventDoc::Word(w) => match w.as_str() {
                "freeze" => Ok(MappingEvent::Freeze),
                "unfreeze" => Ok(MappingEvent::Unfreeze),
                other => Err(D::Error::custom(format!("unknown event {other:?}"))),
            },
            EventDoc::Scale { scale } => Ok(MappingEvent::SetScale(scale)),
            EventDoc::Flip { flip } => flip
                .parse()
                .map(MappingEvent::FlipAxis)
                .map_err(|e: Error| D::Error::custom(e.to_string())),
            EventDoc::Offset { rotation_offset: [w, x, y, z] } => {
                let q = Quaternion::new(w, x, y, z);
                if !q.coords.iter().all(|c| c.is_finite()) || q.norm() == 0.0 {
                    return Err(D::Error::custom("rotation_offset must be a nonzero quaternion"));
                }
                Ok(MappingEvent::SetRotationOffset(UnitQuaternion::from_quaternion(q)))
            }
        }
    }
}

/// An event as recorded in the log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EventRecord {
    Applied(MappingEvent),
    Rejected { rejected: MappingEvent, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappingSummary {
    pub frozen: bool,
    pub scale: f64,
    pub mirror_x: f64,
    pub mirror_y: f64,
    /// wxyz
    pub rotation_offset: [f64; 4],
}

impl MappingSummary {
    fn of(m: &MappingState) -> Self {
        let q = m.rotation_offset();
        Self {
            frozen: m.frozen(),
            scale: m.scale(),
            mirror_x: m.mirror_x().value(),
            mirror_y: m.mirror_y().value(),
            rotation_offset: [q.w, q.i, q.j, q.k],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutput {
    pub frame_index: u64,
    /// simulation time at the end of the tick
    pub time: f64,
    pub hand: HandSample,
    pub target: GripperTarget,
    pub virtual_q: JointConfig,
    pub physical: RobotState,
    pub anomaly: bool,
    pub overlap: bool,
    /// m
    pub lag_distance: f64,
    pub embodiment_active: bool,
    pub mapping: MappingSummary,
    /// events applied since the previous tick
    pub events: Vec<EventRecord>,
}

#[derive(Serialize)]
struct HandDoc {
    t: f64,
    pos: [f64; 3],
    q: [f64; 4],
    aperture: f64,
}

#[derive(Serialize)]
struct TargetDoc {
    pos: [f64; 3],
    q: [f64; 4],
    openness: f64,
}

#[derive(Serialize)]
struct LogLine<'a> {
    frame: u64,
    t: f64,
    hand: HandDoc,
    target: TargetDoc,
    virtual_q: &'a [f64],
    physical_q: &'a [f64],
    gripper_mm: f64,
    anomaly: bool,
    overlap: bool,
    lag_m: f64,
    events: &'a [EventRecord],
}

fn xyz(p: &Pose) -> [f64; 3] {
    let v = p.position();
    [v.x, v.y, v.z]
}

impl FrameOutput {
    /// One NDJSON log record, without the trailing newline.
    pub fn log_line(&self) -> String {
        let line = LogLine {
            frame: self.frame_index,
            t: self.time,
            hand: HandDoc {
                t: self.hand.timestamp,
                pos: xyz(&self.hand.pose),
                q: self.hand.pose.quat_wxyz(),
                aperture: self.hand.aperture,
            },
            target: TargetDoc {
                pos: xyz(&self.target.pose),
                q: self.target.pose.quat_wxyz(),
                openness: self.target.openness,
            },
            virtual_q: self.virtual_q.as_slice(),
            physical_q: self.physical.q.as_slice(),
            gripper_mm: self.physical.gripper_openness,
            anomaly: self.anomaly,
            overlap: self.overlap,
            lag_m: self.lag_distance,
            events: &self.events,
        };
        serde_json::to_string(&line).expect("log records always serialize")
    }
}

/// One input of a recorded or live stream.
#[derive(Clone, Debug, PartialEq)]
pub enum TraceItem {
    Hand(HandSample),
    Event { time: f64, event: MappingEvent },
}

impl TraceItem {
    pub fn time(&self) -> f64 {
        match self {
            TraceItem::Hand(h) => h.timestamp,
            TraceItem::Event { time, .. } => *time,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SessionLog {
    pub frames: Vec<FrameOutput>,
    /// events after the last hand sample; they never reach a tick
    pub trailing_events: Vec<EventRecord>,
}

impl SessionLog {
    /// Newline-delimited JSON, one record per tick.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for f in &self.frames {
            out.push_str(&f.log_line());
            out.push('\n');
        }
        out
    }
}

pub struct Session {
    chain: Arc<KinematicChain>,
    cfg: SessionConfig,
    solver: IkSolver,
    sim: RobotSim,
    mapping: Option<MappingState>,
    last_hand: Option<HandSample>,
    virtual_q: JointConfig,
    /// best-effort solution of the previous tick, used as the next IK seed
    warm_q: JointConfig,
    frame: u64,
    pending_events: Vec<EventRecord>,
}

impl Session {
    pub fn new(chain: Arc<KinematicChain>, cfg: SessionConfig) -> Result<Self> {
        cfg.validate()?;
        let home = match &cfg.home {
            Some(h) => JointConfig::new(h.clone())?,
            None => JointConfig::zeros(chain.dof()),
        };
        chain.check_limits(&home)?;
        let sim = RobotSim::new(chain.clone(), cfg.limits.clone(), home.clone())?;
        let solver = IkSolver::new(cfg.ik.clone())?;
        Ok(Self {
            chain,
            cfg,
            solver,
            sim,
            mapping: None,
            last_hand: None,
            virtual_q: home.clone(),
            warm_q: home,
            frame: 0,
            pending_events: Vec::new(),
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn chain(&self) -> &Arc<KinematicChain> {
        &self.chain
    }

    pub fn mapping(&self) -> Option<&MappingState> {
        self.mapping.as_ref()
    }

    pub fn virtual_q(&self) -> &JointConfig {
        &self.virtual_q
    }

    pub fn physical(&self) -> RobotState {
        self.sim.sample()
    }

    pub fn frame_index(&self) -> u64 {
        self.frame
    }

    pub fn time(&self) -> f64 {
        self.sim.time()
    }

    pub fn last_hand(&self) -> Option<&HandSample> {
        self.last_hand.as_ref()
    }

    pub fn is_frozen(&self) -> bool {
        self.mapping.as_ref().is_some_and(MappingState::frozen)
    }

    /// Advances one tick with `hand` as this tick's sample.
    pub fn tick(&mut self, hand: HandSample) -> Result<FrameOutput> {
        if let Some(prev) = &self.last_hand {
            if hand.timestamp < prev.timestamp {
                return Err(Error::InvalidArgument(format!(
                    "hand timestamp {} precedes {}",
                    hand.timestamp, prev.timestamp
                )));
            }
        }
        let now = self.sim.time();
        let mapping = match self.mapping {
            Some(m) => m,
            None => {
                let m = MappingState::new(&hand, self.chain.tool_pose(self.virtual_q.as_slice()));
                self.mapping = Some(m);
                m
            }
        };
        self.last_hand = Some(hand);
        let target = mapping.map_hand(&hand);

        let mut anomaly = false;
        if !mapping.frozen() {
            self.solver.set_seed(mix_seed(self.cfg.ik.rng_seed, self.frame));
            let sol = self.solver.solve(&self.chain, &target.pose, &self.warm_q)?;
            if sol.reachable {
                self.virtual_q = smooth(&self.virtual_q, &sol.q, self.cfg.ik.smoothing_alpha)?;
                self.sim.enqueue_command(&self.virtual_q, target.openness, now)?;
            } else {
                anomaly = true;
            }
            self.warm_q = sol.q;
        }

        let physical = self.sim.step(self.cfg.dt())?;
        let overlap = self.virtual_q.max_abs_diff(&physical.q) <= self.cfg.overlap_epsilon;
        let lag_distance = (self.chain.tool_position(self.virtual_q.as_slice())
            - physical.tcp_pose.position())
        .norm();
        let out = FrameOutput {
            frame_index: self.frame,
            time: physical.time,
            hand,
            target,
            virtual_q: self.virtual_q.clone(),
            physical,
            anomaly,
            overlap,
            lag_distance,
            embodiment_active: !mapping.frozen(),
            mapping: MappingSummary::of(&mapping),
            events: std::mem::take(&mut self.pending_events),
        };
        self.frame += 1;
        Ok(out)
    }

    /// Applies a mapping event, re-anchoring on the last hand sample and the
    /// virtual twin's tool pose. Rejected events leave the state unchanged.
    pub fn apply_event(&mut self, event: MappingEvent) -> Result<()> {
        let result = self.try_event(event);
        let record = match &result {
            Ok(()) => EventRecord::Applied(event),
            Err(e) => EventRecord::Rejected {
                rejected: event,
                reason: e.to_string(),
            },
        };
        self.pending_events.push(record);
        result
    }

    fn try_event(&mut self, event: MappingEvent) -> Result<()> {
        let (Some(mapping), Some(hand)) = (self.mapping, self.last_hand) else {
            return Err(Error::State("no hand sample received yet".into()));
        };
        let gripper = self.chain.tool_pose(self.virtual_q.as_slice());
        let next = match event {
            MappingEvent::Freeze => mapping.freeze(&hand),
            MappingEvent::Unfreeze => mapping.unfreeze(&hand, gripper)?,
            MappingEvent::SetScale(s) => mapping.set_scale(s, &hand, gripper)?,
            MappingEvent::FlipAxis(a) => mapping.flip_axis(a, &hand, gripper)?,
            MappingEvent::SetRotationOffset(q) => mapping.set_rotation_offset(q),
        };
        self.mapping = Some(next);
        Ok(())
    }

    /// Events applied since the last tick and not yet attached to a frame.
    pub fn take_pending_events(&mut self) -> Vec<EventRecord> {
        std::mem::take(&mut self.pending_events)
    }
}

/// Feeds a trace through a fresh session: one tick per hand sample, events
/// applied in order between ticks.
pub fn replay(chain: Arc<KinematicChain>, cfg: &SessionConfig, trace: &[TraceItem]) -> Result<SessionLog> {
    let mut last_t = f64::NEG_INFINITY;
    for (i, item) in trace.iter().enumerate() {
        let t = item.time();
        if !t.is_finite() || t < last_t {
            return Err(Error::Validation(format!(
                "trace item {} has timestamp {t} before {last_t}",
                i + 1
            )));
        }
        last_t = t;
    }
    let mut session = Session::new(chain, cfg.clone())?;
    let mut log = SessionLog::default();
    for item in trace {
        match item {
            TraceItem::Hand(h) => log.frames.push(session.tick(*h)?),
            // rejections are recorded in the log, not fatal
            TraceItem::Event { event, .. } => {
                let _ = session.apply_event(*event);
            }
        }
    }
    log.trailing_events = session.take_pending_events();
    Ok(log)
}
