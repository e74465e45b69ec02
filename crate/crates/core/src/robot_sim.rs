//! Latency- and rate-limited twin of the physical robot.
//!
//! Commands become visible to the follower only after the configured latency.
//! The follower moves along the joint-space straight line from its current
//! configuration to the active command. Progress along that line is profiled
//! on the tool's path length: the mean tool speed of every step is at most
//! `max_line_velocity`, consecutive step speeds differ by at most
//! `max_line_acceleration * dt`, and each joint stays under its own velocity
//! limit. Released commands are picked up at step boundaries. A command that arrives while the follower is moving faster than the
//! new path admits is deferred while the follower brakes on its current path,
//! so the tool speed never jumps.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{JointConfig, KinematicChain, Pose};
use crate::mapping::MAX_OPENNESS_MM;

/// Commands released within this window before a step starts count as
/// released at its start.
const TIME_EPS: f64 = 1e-9;
/// Joint-motion term (meters per radian) mixed into the path measure so that
/// pure wrist rotations still have a positive length.
const JOINT_MEASURE: f64 = 1e-3;
/// Samples along a path used for the speed-cap table.
const PATH_SAMPLES: usize = 128;
const JOINT_CAP_MARGIN: f64 = 0.98;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotLimits {
    /// m/s
    pub max_line_velocity: f64,
    /// m/s^2
    pub max_line_acceleration: f64,
    /// mm/s
    pub gripper_speed: f64,
    /// seconds
    pub command_latency: f64,
}

impl Default for RobotLimits {
    fn default() -> Self {
        Self {
            max_line_velocity: 2.0,
            max_line_acceleration: 0.2,
            gripper_speed: 100.0,
            command_latency: 0.15,
        }
    }
}

impl RobotLimits {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.max_line_velocity)
            && positive(self.max_line_acceleration)
            && positive(self.gripper_speed))
        {
            return Err(Error::Validation("robot limits must be positive".into()));
        }
        if !(self.command_latency.is_finite() && self.command_latency >= 0.0) {
            return Err(Error::Validation("command latency must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub q: JointConfig,
    /// rad/s over the last step
    pub joint_velocities: Vec<f64>,
    /// mm
    pub gripper_openness: f64,
    pub tcp_pose: Pose,
    /// seconds
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueuedCommand {
    pub release_time: f64,
    pub q: JointConfig,
    pub openness: f64,
}

/// FIFO of commands waiting out the latency.
#[derive(Clone, Debug, Default)]
pub struct CommandQueue {
    items: VecDeque<QueuedCommand>,
}

impl CommandQueue {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn last_release(&self) -> Option<f64> {
        self.items.back().map(|c| c.release_time)
    }

    fn push(&mut self, cmd: QueuedCommand) {
        self.items.push_back(cmd);
    }

    /// Removes every command released by `t`; returns the latest of them.
    fn pop_released(&mut self, t: f64) -> Option<QueuedCommand> {
        let mut latest = None;
        while self
            .items
            .front()
            .is_some_and(|c| c.release_time <= t + TIME_EPS)
        {
            latest = self.items.pop_front();
        }
        latest
    }

}

/// Largest step speed from which the follower can still stop within
/// `remaining`, decelerating by `accel * h` per step of length `h`.
pub(crate) fn stopping_speed(remaining: f64, accel: f64, h: f64) -> f64 {
    if remaining <= 0.0 {
        return 0.0;
    }
    let r = remaining / (accel * h * h);
    let mut m = ((1.0 + 8.0 * r).sqrt() - 1.0) / 2.0;
    m = m.floor();
    // guard the floor against rounding at exact triangular numbers
    if (m + 1.0) * (m + 2.0) / 2.0 <= r {
        m += 1.0;
    } else if m * (m + 1.0) / 2.0 > r {
        m -= 1.0;
    }
    let f = (r / (m + 1.0) - m / 2.0).clamp(0.0, 1.0);
    (m + f) * accel * h
}

/// Joint-space straight line with a precomputed speed-cap table.
#[derive(Clone, Debug)]
struct JointPath {
    start: Vec<f64>,
    delta: Vec<f64>,
    target: Vec<f64>,
    joint_scale: f64,
    s: f64,
    /// cumulative measure at each sample
    sigma: Vec<f64>,
    /// per-segment speed cap from joint velocity limits and the line velocity
    seg_cap: Vec<f64>,
    /// decel-feasible speed at each sample
    feasible: Vec<f64>,
}

impl JointPath {
    fn plan(
        chain: &KinematicChain,
        from: &[f64],
        to: &[f64],
        limits: &RobotLimits,
    ) -> Option<Self> {
        let delta: Vec<f64> = to.iter().zip(from).map(|(b, a)| b - a).collect();
        let span = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if span == 0.0 {
            return None;
        }
        // u <= slope * min_j(w_j / |dq_j|) keeps every joint under its limit
        let joint_factor = chain
            .joints()
            .iter()
            .zip(&delta)
            .filter(|(_, d)| d.abs() > 0.0)
            .map(|(j, d)| j.max_velocity / d.abs())
            .fold(f64::INFINITY, f64::min);
        let mut path = Self {
            start: from.to_vec(),
            delta,
            target: to.to_vec(),
            joint_scale: JOINT_MEASURE * span,
            s: 0.0,
            sigma: Vec::with_capacity(PATH_SAMPLES + 1),
            seg_cap: Vec::with_capacity(PATH_SAMPLES),
            feasible: vec![0.0; PATH_SAMPLES + 1],
        };
        let ds = 1.0 / PATH_SAMPLES as f64;
        let mut prev = chain.tool_position(&path.at(0.0));
        let mut acc = 0.0;
        let mut slopes = Vec::with_capacity(PATH_SAMPLES);
        path.sigma.push(0.0);
        for i in 1..=PATH_SAMPLES {
            let p = chain.tool_position(&path.at(i as f64 * ds));
            let m = ((p - prev).norm_squared() + (path.joint_scale * ds).powi(2)).sqrt();
            acc += m;
            path.sigma.push(acc);
            slopes.push(m / ds);
            prev = p;
        }
        // the slope varies inside a segment; take the neighbourhood minimum
        // with a small margin so the hard joint clamp below rarely binds
        for i in 0..PATH_SAMPLES {
            let lo = i.saturating_sub(1);
            let hi = (i + 2).min(PATH_SAMPLES);
            let slope = slopes[lo..hi].iter().fold(f64::INFINITY, |m, &x| m.min(x));
            path.seg_cap
                .push((JOINT_CAP_MARGIN * slope * joint_factor).min(limits.max_line_velocity));
        }
        // stopping at the end is handled by the discrete stopping law
        let a = limits.max_line_acceleration;
        path.feasible[PATH_SAMPLES] = path.seg_cap[PATH_SAMPLES - 1];
        for i in (0..PATH_SAMPLES).rev() {
            let ahead = path.feasible[i + 1];
            let span = path.sigma[i + 1] - path.sigma[i];
            path.feasible[i] = path.seg_cap[i].min((ahead * ahead + 2.0 * a * span).sqrt());
        }
        Some(path)
    }

    fn at(&self, s: f64) -> Vec<f64> {
        if s >= 1.0 {
            return self.target.clone();
        }
        self.start
            .iter()
            .zip(&self.delta)
            .map(|(a, d)| a + s * d)
            .collect()
    }

    fn measure(&self, chain: &KinematicChain, s0: f64, s1: f64) -> f64 {
        let p0 = chain.tool_position(&self.at(s0));
        let p1 = chain.tool_position(&self.at(s1));
        ((p1 - p0).norm_squared() + (self.joint_scale * (s1 - s0)).powi(2)).sqrt()
    }

    fn segment(&self, s: f64) -> usize {
        ((s * PATH_SAMPLES as f64).floor() as usize).min(PATH_SAMPLES - 1)
    }

    fn total(&self) -> f64 {
        self.sigma[PATH_SAMPLES]
    }

    fn remaining(&self, chain: &KinematicChain) -> f64 {
        if self.s >= 1.0 {
            return 0.0;
        }
        let i = self.segment(self.s);
        let node = (i + 1) as f64 / PATH_SAMPLES as f64;
        self.total() - self.sigma[i + 1] + self.measure(chain, self.s, node)
    }

    /// Decel-feasible speed at path position `pos` (measured from the start).
    fn feasible_at(&self, pos: f64, a: f64) -> f64 {
        if pos >= self.total() {
            return self.feasible[PATH_SAMPLES];
        }
        let i = match self.sigma.partition_point(|&x| x <= pos) {
            0 => 0,
            k => (k - 1).min(PATH_SAMPLES - 1),
        };
        let ahead = self.feasible[i + 1];
        let gap = (self.sigma[i + 1] - pos).max(0.0);
        self.seg_cap[i].min((ahead * ahead + 2.0 * a * gap).sqrt())
    }

    /// Whether a follower moving at `speed` can join this path while slowing
    /// by at most `a * h` this step.
    fn admits(&self, speed: f64, a: f64, h: f64) -> bool {
        let u = (speed - a * h).max(0.0);
        u <= self.feasible[0]
            && u <= self.feasible_at(u * h, a)
            && u <= stopping_speed(self.total(), a, h)
    }

    /// Path parameter reached after travelling `dist` from the current `s`.
    fn solve_step(&self, chain: &KinematicChain, dist: f64) -> f64 {
        let (mut lo, mut hi) = (self.s, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.measure(chain, self.s, mid) < dist {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

#[derive(Clone, Debug)]
pub struct RobotSim {
    chain: Arc<KinematicChain>,
    limits: RobotLimits,
    q: Vec<f64>,
    joint_velocities: Vec<f64>,
    gripper: f64,
    gripper_cmd: f64,
    time: f64,
    /// mean tool-path speed over the last motion segment
    speed: f64,
    queue: CommandQueue,
    active: Option<JointPath>,
    pending: Option<QueuedCommand>,
}

impl RobotSim {
    /// Follower at rest in `home` with the gripper closed.
    pub fn new(chain: Arc<KinematicChain>, limits: RobotLimits, home: JointConfig) -> Result<Self> {
        limits.validate()?;
        chain.check_limits(&home)?;
        let n = chain.dof();
        Ok(Self {
            chain,
            limits,
            q: home.into_vec(),
            joint_velocities: vec![0.0; n],
            gripper: 0.0,
            gripper_cmd: 0.0,
            time: 0.0,
            speed: 0.0,
            queue: CommandQueue::default(),
            active: None,
            pending: None,
        })
    }

    pub fn limits(&self) -> &RobotLimits {
        &self.limits
    }

    pub fn chain(&self) -> &Arc<KinematicChain> {
        &self.chain
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn queue(&self) -> &CommandQueue {
        &self.queue
    }

    /// True when nothing is queued, pending or in motion.
    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
            && self.pending.is_none()
            && self.active.is_none()
            && self.gripper == self.gripper_cmd
    }

    /// Queues a joint command; it is released `command_latency` after `now`.
    pub fn enqueue_command(&mut self, q: &JointConfig, openness_mm: f64, now: f64) -> Result<()> {
        self.chain.check_limits(q)?;
        if !openness_mm.is_finite() || !now.is_finite() {
            return Err(Error::InvalidArgument("non-finite command".into()));
        }
        let mut release = now + self.limits.command_latency;
        if let Some(last) = self.queue.last_release() {
            release = release.max(last);
        }
        self.queue.push(QueuedCommand {
            release_time: release,
            q: q.clone(),
            openness: openness_mm.clamp(0.0, MAX_OPENNESS_MM),
        });
        Ok(())
    }

    pub fn sample(&self) -> RobotState {
        RobotState {
            q: JointConfig::new(self.q.clone()).expect("simulated angles are finite"),
            joint_velocities: self.joint_velocities.clone(),
            gripper_openness: self.gripper,
            tcp_pose: self.chain.tool_pose(&self.q),
            time: self.time,
        }
    }

    /// Advances the simulation by `dt` seconds (`0 < dt <= 0.1`).
    pub fn step(&mut self, dt: f64) -> Result<RobotState> {
        if !(dt > 0.0 && dt <= 0.1) {
            return Err(Error::InvalidArgument(format!(
                "step dt {dt} outside (0, 0.1]"
            )));
        }
        let q_before = self.q.clone();
        // released commands take effect from the start of the next step, so a
        // step never mixes two paths
        if let Some(cmd) = self.queue.pop_released(self.time) {
            self.gripper_cmd = cmd.openness;
            self.pending = Some(cmd);
        }
        self.advance(dt);
        let t_end = self.time + dt;
        self.time = t_end;
        for ((v, a), b) in self.joint_velocities.iter_mut().zip(&self.q).zip(&q_before) {
            *v = (a - b) / dt;
        }
        Ok(self.sample())
    }

    fn advance(&mut self, h: f64) {
        let a = self.limits.max_line_acceleration;
        let v_max = self.limits.max_line_velocity;

        let step = self.limits.gripper_speed * h;
        self.gripper += (self.gripper_cmd - self.gripper).clamp(-step, step);

        if let Some(cmd) = &self.pending {
            match JointPath::plan(&self.chain, &self.q, cmd.q.as_slice(), &self.limits) {
                None if self.speed == 0.0 => {
                    self.active = None;
                    self.pending = None;
                }
                None => {}
                Some(path) if path.admits(self.speed, a, h) => {
                    self.active = Some(path);
                    self.pending = None;
                }
                Some(_) => {}
            }
        }
        let braking = self.pending.is_some();

        let Some(path) = self.active.as_mut() else {
            self.speed = 0.0;
            return;
        };
        let max_ds = self
            .chain
            .joints()
            .iter()
            .zip(&path.delta)
            .filter(|(_, d)| d.abs() > 0.0)
            .map(|(j, d)| j.max_velocity * h / d.abs())
            .fold(f64::INFINITY, f64::min);
        let s_cap = (path.s + max_ds).min(1.0);
        let remaining = path.remaining(&self.chain);
        let pos = path.total() - remaining;
        let mut u = (self.speed + a * h)
            .min(v_max)
            .min(stopping_speed(remaining, a, h))
            .min(path.feasible_at(pos, a));
        u = u.min(path.feasible_at(pos + u * h, a));
        if s_cap < 1.0 {
            u = u.min(path.measure(&self.chain, path.s, s_cap) / h);
        }
        if braking {
            u = u.min((self.speed - a * h).max(0.0));
        }
        let u = u.max(0.0);
        let dist = u * h;
        if dist >= remaining - 1e-12 {
            self.q = path.target.clone();
            self.active = None;
            self.speed = 0.0;
            return;
        }
        if dist <= 0.0 {
            self.speed = 0.0;
            return;
        }
        // hard per-joint velocity limit
        let s_next = path.solve_step(&self.chain, dist).min(s_cap);
        let travelled = path.measure(&self.chain, path.s, s_next);
        path.s = s_next;
        self.q = path.at(s_next);
        self.chain.clamp_in_place(&mut self.q);
        self.speed = travelled / h;
    }
}
