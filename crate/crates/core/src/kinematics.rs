//! Serial revolute chains: geometry, forward kinematics, limits and reach.
//!
//! Frames compose child-after-parent starting from the world-frame base: the
//! tool pose is `base * (origin_0 * rot_0(q_0)) * ... * (origin_n * rot_n(q_n)) * tool`.

use std::fmt;

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking unit norms of axes and quaternions.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Rigid transform: position in meters plus a unit quaternion.
///
/// The quaternion is kept in canonical form (scalar part non-negative).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseDoc", into = "PoseDoc")]
pub struct Pose {
    position: Vector3<f64>,
    orientation: UnitQuaternion<f64>,
}

/// Wire form of a pose: `{"t":[x,y,z],"q":[w,x,y,z]}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseDoc {
    pub t: [f64; 3],
    pub q: [f64; 4],
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: canonical(orientation),
        }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(t, UnitQuaternion::identity())
    }

    /// Builds a pose from raw arrays, normalizing the quaternion.
    pub fn from_arrays(t: [f64; 3], q_wxyz: [f64; 4]) -> Result<Self> {
        if t.iter().chain(q_wxyz.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("pose contains non-finite values".into()));
        }
        let q = Quaternion::new(q_wxyz[0], q_wxyz[1], q_wxyz[2], q_wxyz[3]);
        let norm = q.norm();
        if norm < 1e-12 {
            return Err(Error::Validation("zero quaternion".into()));
        }
        Ok(Self::new(
            Vector3::new(t[0], t[1], t[2]),
            UnitQuaternion::new_unchecked(q),
        ))
    }

    pub fn position(&self) -> Vector3<f64> {
        self.position
    }

    pub fn orientation(&self) -> UnitQuaternion<f64> {
        self.orientation
    }

    pub fn quat_wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// `self * other`: `other` expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.position + self.orientation * other.position,
            self.orientation * other.orientation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose::new(-(inv * self.position), inv)
    }

    pub fn to_doc(&self) -> PoseDoc {
        PoseDoc {
            t: [self.position.x, self.position.y, self.position.z],
            q: self.quat_wxyz(),
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl TryFrom<PoseDoc> for Pose {
    type Error = Error;

    fn try_from(doc: PoseDoc) -> Result<Self> {
        Pose::from_arrays(doc.t, doc.q)
    }
}

impl From<Pose> for PoseDoc {
    fn from(p: Pose) -> Self {
        p.to_doc()
    }
}

/// Renormalizes and flips the quaternion so that `w >= 0`.
pub fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let mut raw = *q.quaternion();
    let n = raw.norm();
    // leave unit inputs bit-exact so serialization round-trips losslessly
    if (n - 1.0).abs() > 4.0 * f64::EPSILON {
        raw /= n;
    }
    if raw.w < 0.0 {
        raw = -raw;
    }
    UnitQuaternion::new_unchecked(raw)
}

/// Rotation angle in `[0, pi]` between two orientations.
///
/// Uses `atan2` on the relative quaternion so identical inputs give exactly zero.
pub fn rotation_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    // conj(a) * b written out so that identical inputs cancel exactly
    let (qa, qb) = (a.quaternion(), b.quaternion());
    let (va, vb) = (qa.imag(), qb.imag());
    let w = qa.w * qb.w + va.dot(&vb);
    let v = vb * qa.w - va * qb.w - va.cross(&vb);
    2.0 * v.norm().atan2(w.abs())
}

/// Position error (meters) and rotation error (radians) between two poses.
pub fn pose_error(a: &Pose, b: &Pose) -> (f64, f64) {
    (
        (a.position - b.position).norm(),
        rotation_angle(&a.orientation, &b.orientation),
    )
}

/// Joint angles in radians, one per chain joint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct JointConfig(Vec<f64>);

impl JointConfig {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if let Some(i) = angles.iter().position(|a| !a.is_finite()) {
            return Err(Error::Validation(format!("joint {i} angle is not finite")));
        }
        Ok(Self(angles))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Infinity norm of the difference between two configurations.
    pub fn max_abs_diff(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for JointConfig {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        JointConfig::new(v)
    }
}

impl From<JointConfig> for Vec<f64> {
    fn from(q: JointConfig) -> Self {
        q.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointSpec {
    pub axis: Unit<Vector3<f64>>,
    pub origin_translation: Vector3<f64>,
    pub origin_rotation: UnitQuaternion<f64>,
    pub limit_lo: f64,
    pub limit_hi: f64,
    pub max_velocity: f64,
}

impl JointSpec {
    pub fn range(&self) -> f64 {
        self.limit_hi - self.limit_lo
    }

    pub fn clamp(&self, angle: f64) -> f64 {
        angle.clamp(self.limit_lo, self.limit_hi)
    }

    pub fn contains(&self, angle: f64) -> bool {
        angle >= self.limit_lo && angle <= self.limit_hi
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KinematicChain {
    joints: Vec<JointSpec>,
    base_frame: Pose,
    tool_offset: Pose,
    reach_radius: f64,
}

impl KinematicChain {
    pub fn new(
        joints: Vec<JointSpec>,
        base_frame: Pose,
        tool_offset: Pose,
        reach_radius: f64,
    ) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::Validation("chain has no joints".into()));
        }
        if !(reach_radius.is_finite() && reach_radius > 0.0) {
            return Err(Error::Validation(format!(
                "reach radius must be positive, got {reach_radius}"
            )));
        }
        for (i, j) in joints.iter().enumerate() {
            if !(j.limit_lo.is_finite() && j.limit_hi.is_finite()) || j.limit_lo >= j.limit_hi {
                return Err(Error::Validation(format!(
                    "joint {i}: lower limit {} must be below upper limit {}",
                    j.limit_lo, j.limit_hi
                )));
            }
            if !(j.max_velocity.is_finite() && j.max_velocity > 0.0) {
                return Err(Error::Validation(format!(
                    "joint {i}: max velocity must be positive"
                )));
            }
            if (j.axis.norm() - 1.0).abs() >= UNIT_TOLERANCE {
                return Err(Error::Validation(format!("joint {i}: axis is not unit")));
            }
        }
        Ok(Self {
            joints,
            base_frame,
            tool_offset,
            reach_radius,
        })
    }

    /// Parses and validates a chain-spec JSON document.
    pub fn from_json(document: &str) -> Result<Self> {
        let doc: ChainDocument =
            serde_json::from_str(document).map_err(|e| Error::Parse(e.to_string()))?;
        doc.into_chain()
    }

    /// Six-joint runtime chain with an 886.5 mm reach sphere.
    pub fn reference_6dof() -> Self {
        Self::from_json(include_str!("../chains/reference_6dof.json"))
            .expect("bundled reference chain is valid")
    }

    /// Two-link planar chain (0.5 m + 0.3865 m) rotating about z.
    pub fn planar_test() -> Self {
        Self::from_json(include_str!("../chains/planar_test.json"))
            .expect("bundled planar chain is valid")
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn base_frame(&self) -> &Pose {
        &self.base_frame
    }

    pub fn tool_offset(&self) -> &Pose {
        &self.tool_offset
    }

    pub fn reach_radius(&self) -> f64 {
        self.reach_radius
    }

    pub fn check_dimension(&self, n: usize) -> Result<()> {
        if n != self.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.dof(),
                actual: n,
            });
        }
        Ok(())
    }

    pub fn forward_kinematics(&self, q: &JointConfig) -> Result<Pose> {
        self.check_dimension(q.len())?;
        Ok(self.tool_pose(q.as_slice()))
    }

    /// Tool pose for raw joint angles.
    ///
    /// Panics if `angles.len()` differs from the joint count.
    pub fn tool_pose(&self, angles: &[f64]) -> Pose {
        assert_eq!(angles.len(), self.joints.len(), "joint count mismatch");
        let mut position = self.base_frame.position;
        let mut rotation = self.base_frame.orientation;
        for (joint, &angle) in self.joints.iter().zip(angles) {
            position += rotation * joint.origin_translation;
            rotation = rotation
                * joint.origin_rotation
                * UnitQuaternion::from_axis_angle(&joint.axis, angle);
        }
        position += rotation * self.tool_offset.position;
        rotation *= self.tool_offset.orientation;
        Pose::new(position, rotation)
    }

    /// Tool position only; cheaper than [`tool_pose`](Self::tool_pose).
    pub fn tool_position(&self, angles: &[f64]) -> Vector3<f64> {
        assert_eq!(angles.len(), self.joints.len(), "joint count mismatch");
        let mut position = self.base_frame.position;
        let mut rotation = self.base_frame.orientation;
        for (joint, &angle) in self.joints.iter().zip(angles) {
            position += rotation * joint.origin_translation;
            rotation = rotation
                * joint.origin_rotation
                * UnitQuaternion::from_axis_angle(&joint.axis, angle);
        }
        position + rotation * self.tool_offset.position
    }

    pub fn clamp_to_limits(&self, q: &JointConfig) -> Result<JointConfig> {
        self.check_dimension(q.len())?;
        let mut out = q.as_slice().to_vec();
        self.clamp_in_place(&mut out);
        Ok(JointConfig(out))
    }

    pub fn clamp_in_place(&self, angles: &mut [f64]) {
        for (a, j) in angles.iter_mut().zip(&self.joints) {
            *a = j.clamp(*a);
        }
    }

    pub fn within_limits(&self, angles: &[f64]) -> bool {
        angles.len() == self.dof() && angles.iter().zip(&self.joints).all(|(a, j)| j.contains(*a))
    }

    /// Index of the first joint outside its limits, if any.
    pub fn check_limits(&self, q: &JointConfig) -> Result<()> {
        self.check_dimension(q.len())?;
        for (i, (a, j)) in q.as_slice().iter().zip(&self.joints).enumerate() {
            if !j.contains(*a) {
                return Err(Error::OutOfLimits {
                    joint: i,
                    value: *a,
                    lo: j.limit_lo,
                    hi: j.limit_hi,
                });
            }
        }
        Ok(())
    }

    /// Necessary reachability condition: inside the closed reach sphere.
    pub fn reach_check(&self, p: &Vector3<f64>) -> bool {
        (p - self.base_frame.position).norm() <= self.reach_radius
    }

    /// Sum of link offsets; an upper bound on how far the tool can get from the base.
    pub fn link_length_bound(&self) -> f64 {
        self.joints
            .iter()
            .map(|j| j.origin_translation.norm())
            .sum::<f64>()
            + self.tool_offset.position.norm()
    }

    pub fn summary(&self) -> ChainSummary {
        ChainSummary {
            joints: self.dof(),
            reach_m: self.reach_radius,
            limits: self.joints.iter().map(|j| [j.limit_lo, j.limit_hi]).collect(),
            max_vel: self.joints.iter().map(|j| j.max_velocity).collect(),
        }
    }
}

impl fmt::Display for KinematicChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-joint chain, reach {:.4} m", self.dof(), self.reach_radius)
    }
}

/// Compact description sent to clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub joints: usize,
    pub reach_m: f64,
    pub limits: Vec<[f64; 2]>,
    pub max_vel: Vec<f64>,
}

/// Chain-spec document as stored on disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainDocument {
    pub base: PoseDoc,
    pub tool: PoseDoc,
    pub reach_radius_m: f64,
    pub joints: Vec<JointDocument>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDocument {
    pub axis: [f64; 3],
    pub origin_t: [f64; 3],
    pub origin_q: [f64; 4],
    pub limits: [f64; 2],
    pub max_vel: f64,
}

impl ChainDocument {
    pub fn into_chain(self) -> Result<KinematicChain> {
        let base = Pose::try_from(self.base)?;
        let tool = Pose::try_from(self.tool)?;
        let joints = self
            .joints
            .iter()
            .enumerate()
            .map(|(i, j)| {
                let axis = Vector3::from(j.axis);
                let n = axis.norm();
                if !n.is_finite() || n < 1e-12 {
                    return Err(Error::Validation(format!("joint {i}: zero axis")));
                }
                let origin = Pose::from_arrays(j.origin_t, j.origin_q)
                    .map_err(|e| Error::Validation(format!("joint {i}: {e}")))?;
                Ok(JointSpec {
                    axis: Unit::new_normalize(axis),
                    origin_translation: origin.position,
                    origin_rotation: origin.orientation,
                    limit_lo: j.limits[0],
                    limit_hi: j.limits[1],
                    max_velocity: j.max_vel,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        KinematicChain::new(joints, base, tool, self.reach_radius_m)
    }
}
