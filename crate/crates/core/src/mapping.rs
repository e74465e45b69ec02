//! Hand-to-gripper spatial mapping.
//!
//! The mapping is relative: the gripper target is the gripper anchor displaced
//! by the scaled, mirrored hand displacement from the hand anchor, and rotated
//! by the hand's rotation relative to its anchor orientation. Re-anchoring
//! operations (unfreeze, scale, mirror) reset both anchors to the current hand
//! and gripper poses so the target never jumps.

use std::fmt;
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Pose;

/// Largest gripper opening in millimeters.
pub const MAX_OPENNESS_MM: f64 = 145.0;
pub const MIN_SCALE: f64 = 0.5;
pub const MAX_SCALE: f64 = 2.0;

/// Tracked wrist pose plus normalized hand openness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HandSample {
    pub pose: Pose,
    /// 0 = fist, 1 = fully open.
    pub aperture: f64,
    /// seconds
    pub timestamp: f64,
}

impl HandSample {
    /// Clamps the aperture into `[0, 1]`; rejects non-finite values.
    pub fn new(pose: Pose, aperture: f64, timestamp: f64) -> Result<Self> {
        if !aperture.is_finite() || !timestamp.is_finite() {
            return Err(Error::Validation(
                "hand sample has non-finite aperture or timestamp".into(),
            ));
        }
        Ok(Self {
            pose,
            aperture: aperture.clamp(0.0, 1.0),
            timestamp,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperTarget {
    pub pose: Pose,
    /// millimeters, within `[0, 145]`
    pub openness: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::InvalidArgument(format!("unknown axis {other:?}"))),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// Mirror sign; only ever +1 or -1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Sign::Positive => Sign::Negative,
            Sign::Negative => Sign::Positive,
        }
    }
}

/// Linear map from hand aperture to gripper openness in millimeters.
pub fn map_openness(aperture: f64) -> f64 {
    if aperture.is_nan() {
        return 0.0;
    }
    aperture.clamp(0.0, 1.0) * MAX_OPENNESS_MM
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MappingState {
    frozen: bool,
    hand_anchor: Pose,
    /// Gripper anchor with the rotation offset factored out of its
    /// orientation, so that `offset * anchor` is the pose supplied at
    /// re-anchoring.
    gripper_anchor: Pose,
    scale: f64,
    mirror_x: Sign,
    mirror_y: Sign,
    rotation_offset: UnitQuaternion<f64>,
    /// Target held while frozen.
    held: Option<GripperTarget>,
}

impl MappingState {
    /// Active mapping anchored at the given hand sample and gripper pose.
    pub fn new(hand: &HandSample, gripper_pose: Pose) -> Self {
        Self {
            frozen: false,
            hand_anchor: hand.pose,
            gripper_anchor: gripper_pose,
            scale: 1.0,
            mirror_x: Sign::Positive,
            mirror_y: Sign::Positive,
            rotation_offset: UnitQuaternion::identity(),
            held: None,
        }
    }

    pub fn frozen(&self) -> bool {
        self.frozen
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn mirror_x(&self) -> Sign {
        self.mirror_x
    }

    pub fn mirror_y(&self) -> Sign {
        self.mirror_y
    }

    pub fn rotation_offset(&self) -> UnitQuaternion<f64> {
        self.rotation_offset
    }

    pub fn hand_anchor(&self) -> &Pose {
        &self.hand_anchor
    }

    /// Gripper pose the mapping produces at the hand anchor.
    pub fn gripper_anchor(&self) -> Pose {
        Pose::new(
            self.gripper_anchor.position(),
            self.rotation_offset * self.gripper_anchor.orientation(),
        )
    }

    /// Linear part of the translation map: `scale * diag(mx, my, 1)`.
    pub fn translation_gain(&self) -> Vector3<f64> {
        Vector3::new(
            self.scale * self.mirror_x.value(),
            self.scale * self.mirror_y.value(),
            self.scale,
        )
    }

    pub fn map_hand(&self, hand: &HandSample) -> GripperTarget {
        if self.frozen {
            if let Some(held) = self.held {
                return held;
            }
        }
        let delta = hand.pose.position() - self.hand_anchor.position();
        let position = self.gripper_anchor.position() + self.translation_gain().component_mul(&delta);
        let relative = hand.pose.orientation() * self.hand_anchor.orientation().inverse();
        let orientation = self.rotation_offset * relative * self.gripper_anchor.orientation();
        GripperTarget {
            pose: Pose::new(position, orientation),
            openness: map_openness(hand.aperture),
        }
    }

    /// Pauses the mapping, holding the target produced for `current_hand`
    /// (pose and openness). Freezing a frozen mapping changes nothing.
    pub fn freeze(&self, current_hand: &HandSample) -> Self {
        if self.frozen {
            return *self;
        }
        let held = self.map_hand(current_hand);
        Self {
            frozen: true,
            held: Some(held),
            ..*self
        }
    }

    /// Resumes the mapping, re-anchored at the current hand and gripper poses.
    pub fn unfreeze(&self, current_hand: &HandSample, current_gripper: Pose) -> Result<Self> {
        if !self.frozen {
            return Err(Error::State("unfreeze requested while the mapping is active".into()));
        }
        let mut next = self.reanchored(current_hand, current_gripper);
        next.frozen = false;
        next.held = None;
        Ok(next)
    }

    /// Sets the scale, clamped to `[0.5, 2.0]`, and re-anchors.
    pub fn set_scale(
        &self,
        scale: f64,
        current_hand: &HandSample,
        current_gripper: Pose,
    ) -> Result<Self> {
        if !scale.is_finite() {
            return Err(Error::InvalidArgument(format!("scale {scale} is not finite")));
        }
        let mut next = self.reanchored(current_hand, current_gripper);
        next.scale = scale.clamp(MIN_SCALE, MAX_SCALE);
        Ok(next)
    }

    /// Reverses mapped motion along X or Y and re-anchors.
    pub fn flip_axis(
        &self,
        axis: Axis,
        current_hand: &HandSample,
        current_gripper: Pose,
    ) -> Result<Self> {
        let mut next = self.reanchored(current_hand, current_gripper);
        match axis {
            Axis::X => next.mirror_x = next.mirror_x.flipped(),
            Axis::Y => next.mirror_y = next.mirror_y.flipped(),
            Axis::Z => {
                return Err(Error::InvalidArgument(
                    "only the x and y axes can be mirrored".into(),
                ))
            }
        }
        Ok(next)
    }

    /// Replaces the comfort rotation offset without re-anchoring; the target
    /// orientation turns by the change in offset.
    pub fn set_rotation_offset(&self, offset: UnitQuaternion<f64>) -> Self {
        let mut next = *self;
        next.rotation_offset = crate::kinematics::canonical(offset);
        next
    }

    fn reanchored(&self, hand: &HandSample, gripper: Pose) -> Self {
        let mut next = *self;
        next.hand_anchor = hand.pose;
        next.gripper_anchor = Pose::new(
            gripper.position(),
            self.rotation_offset.inverse() * gripper.orientation(),
        );
        next
    }
}

/// Offset used for operators who prefer a relaxed, slightly rotated wrist.
pub fn comfort_offset() -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 20f64.to_radians())
}
