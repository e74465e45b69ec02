//! Hand-trace files: one JSON object per line, either a hand sample
//! `{"t","pos","q","aperture"}` or an event `{"t","event"}`.

use std::path::Path;

use armtwin_core::kinematics::Pose;
use armtwin_core::mapping::HandSample;
use armtwin_core::session::{MappingEvent, TraceItem};
use serde::{Deserialize, Serialize};

use crate::error::{read_file, GatewayError, Result};

/// Hand sample as it appears on the wire and in trace files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandLine {
    pub t: f64,
    pub pos: [f64; 3],
    /// wxyz
    pub q: [f64; 4],
    pub aperture: f64,
}

impl HandLine {
    pub fn to_sample(&self) -> armtwin_core::Result<HandSample> {
        let pose = Pose::from_arrays(self.pos, self.q)?;
        HandSample::new(pose, self.aperture, self.t)
    }

    pub fn from_sample(h: &HandSample) -> Self {
        let p = h.pose.position();
        Self {
            t: h.timestamp,
            pos: [p.x, p.y, p.z],
            q: h.pose.quat_wxyz(),
            aperture: h.aperture,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventLine {
    pub t: f64,
    pub event: MappingEvent,
}

/// Parses one trace line (without line-number context).
pub fn parse_line(line: &str) -> std::result::Result<TraceItem, String> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let is_event = value.get("event").is_some();
    if is_event {
        let e: EventLine = serde_json::from_value(value).map_err(|e| e.to_string())?;
        if !e.t.is_finite() {
            return Err("timestamp is not finite".into());
        }
        Ok(TraceItem::Event {
            time: e.t,
            event: e.event,
        })
    } else {
        let h: HandLine = serde_json::from_value(value).map_err(|e| e.to_string())?;
        h.to_sample().map(TraceItem::Hand).map_err(|e| e.to_string())
    }
}

/// Parses a whole trace. Blank lines are skipped; timestamps must not
/// decrease. Errors cite 1-based line numbers.
pub fn parse_trace(text: &str) -> Result<Vec<TraceItem>> {
    let mut items = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let item = parse_line(line).map_err(|message| GatewayError::Trace {
            line: line_no,
            message,
        })?;
        let t = item.time();
        if t < last {
            return Err(GatewayError::Trace {
                line: line_no,
                message: format!("timestamp {t} goes back from {last}"),
            });
        }
        last = t;
        items.push(item);
    }
    Ok(items)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceItem>> {
    parse_trace(&read_file(path)?)
}

pub fn encode_item(item: &TraceItem) -> String {
    let text = match item {
        TraceItem::Hand(h) => serde_json::to_string(&HandLine::from_sample(h)),
        TraceItem::Event { time, event } => serde_json::to_string(&EventLine {
            t: *time,
            event: *event,
        }),
    };
    text.expect("trace lines always serialize")
}

pub fn encode_trace(items: &[TraceItem]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&encode_item(item));
        out.push('\n');
    }
    out
}
