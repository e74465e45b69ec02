//! Wire messages. Every message is one JSON text frame of the form
//! `{"kind": ..., "payload": ...}`.

use armtwin_core::kinematics::ChainSummary;
use armtwin_core::robot_sim::RobotLimits;
use armtwin_core::session::{EventRecord, FrameOutput, MappingEvent, MappingSummary};
use serde::{Deserialize, Serialize};

use crate::error::{GatewayError, Result};
use crate::task::TaskReport;
use crate::trace::HandLine;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    Operator,
    Observer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    pub version: u32,
    /// Requested role; a second operator is seated as an observer.
    #[serde(default)]
    pub role: Role,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventPayload {
    pub event: MappingEvent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Hello(Hello),
    Hand(HandLine),
    Event(EventPayload),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HelloAck {
    pub version: u32,
    pub role: Role,
    pub chain: ChainSummary,
    pub limits: RobotLimits,
    pub frame_rate: f64,
    pub overlap_epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosePayload {
    pub pos: [f64; 3],
    /// wxyz
    pub q: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramePayload {
    pub frame: u64,
    pub t: f64,
    pub target: PosePayload,
    pub target_openness_mm: f64,
    pub virtual_q: Vec<f64>,
    pub physical_q: Vec<f64>,
    pub tcp: PosePayload,
    pub gripper_mm: f64,
    pub anomaly: bool,
    pub overlap: bool,
    pub lag_m: f64,
    pub embodiment_active: bool,
    pub mapping: MappingSummary,
    pub events: Vec<EventRecord>,
}

impl From<&FrameOutput> for FramePayload {
    fn from(f: &FrameOutput) -> Self {
        let pose = |p: &armtwin_core::kinematics::Pose| {
            let v = p.position();
            PosePayload {
                pos: [v.x, v.y, v.z],
                q: p.quat_wxyz(),
            }
        };
        Self {
            frame: f.frame_index,
            t: f.time,
            target: pose(&f.target.pose),
            target_openness_mm: f.target.openness,
            virtual_q: f.virtual_q.as_slice().to_vec(),
            physical_q: f.physical.q.as_slice().to_vec(),
            tcp: pose(&f.physical.tcp_pose),
            gripper_mm: f.physical.gripper_openness,
            anomaly: f.anomaly,
            overlap: f.overlap,
            lag_m: f.lag_distance,
            embodiment_active: f.embodiment_active,
            mapping: f.mapping.clone(),
            events: f.events.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    VersionMismatch,
    HandshakeRequired,
    NotOperator,
    RejectedEvent,
    InvalidSample,
    Busy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorPayload {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServerMessage {
    Hello(HelloAck),
    Frame(FramePayload),
    Error(ErrorPayload),
    TaskResult(TaskReport),
}

impl ServerMessage {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        ServerMessage::Error(ErrorPayload {
            code,
            message: message.into(),
        })
    }
}

fn decode<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| GatewayError::Protocol(e.to_string()))
}

fn encode<T: Serialize>(msg: &T) -> String {
    serde_json::to_string(msg).expect("protocol messages always serialize")
}

impl ClientMessage {
    pub fn decode(text: &str) -> Result<Self> {
        decode(text)
    }

    pub fn encode(&self) -> String {
        encode(self)
    }
}

impl ServerMessage {
    pub fn decode(text: &str) -> Result<Self> {
        decode(text)
    }

    pub fn encode(&self) -> String {
        encode(self)
    }
}
