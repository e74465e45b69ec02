//! Batch workloads over independent targets.
//!
//! Every item gets its own seeded RNG derived from `(seed, index)`, so a batch
//! gives identical results whether it runs on the rayon pool or sequentially.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ik::{IkConfig, IkSolver};
use crate::kinematics::{pose_error, JointConfig, KinematicChain, Pose};

/// How a batch is executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    /// rayon work-stealing pool; sequential when the `parallel` feature is off
    Parallel,
    Sequential,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// `f(0..n)` collected in index order.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// SplitMix64 finalizer; decorrelates per-item seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform configuration inside the joint limits.
pub fn sample_configuration(chain: &KinematicChain, rng: &mut impl Rng) -> JointConfig {
    let q = chain
        .joints()
        .iter()
        .map(|j| rng.random_range(j.limit_lo..=j.limit_hi))
        .collect();
    JointConfig::new(q).expect("finite limits give finite samples")
}

/// Random target position strictly outside the reach sphere, at a distance in
/// `(reach * (1 + margin), reach * 2]`, with a random orientation.
pub fn sample_unreachable(chain: &KinematicChain, margin: f64, rng: &mut impl Rng) -> Pose {
    let reach = chain.reach_radius();
    let dir = loop {
        let v = nalgebra::Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        if v.norm() > 1e-6 {
            break v.normalize();
        }
    };
    let r = rng.random_range(reach * (1.0 + margin)..=reach * 2.0);
    let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    ));
    Pose::new(chain.base_frame().position() + dir * r, q)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundTripSettings {
    pub targets: usize,
    /// warm-started frames allowed per target
    pub max_frames: usize,
    /// std-dev (rad) of the Gaussian perturbation of the initial seed
    pub seed_noise: f64,
    pub seed: u64,
}

impl Default for RoundTripSettings {
    fn default() -> Self {
        Self {
            targets: 1000,
            max_frames: 60,
            seed_noise: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundTripOutcome {
    /// frames until the solution met both tolerances
    pub frames: Option<usize>,
    pub position_residual: f64,
    pub rotation_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundTripReport {
    pub outcomes: Vec<RoundTripOutcome>,
}

impl RoundTripReport {
    pub fn passed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.frames.is_some()).count()
    }

    pub fn pass_rate(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        self.passed() as f64 / self.outcomes.len() as f64
    }
}

/// FK-sampled targets solved frame by frame, each frame seeded with the
/// previous frame's best solution.
pub fn round_trip(
    chain: &KinematicChain,
    cfg: &IkConfig,
    settings: &RoundTripSettings,
    exec: Execution,
) -> Result<RoundTripReport> {
    cfg.validate()?;
    if settings.targets == 0 || settings.max_frames == 0 {
        return Err(Error::InvalidArgument(
            "round trip needs at least one target and one frame".into(),
        ));
    }
    let outcomes = map_indexed(settings.targets, exec, |i| {
        let item_seed = mix_seed(settings.seed, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(item_seed);
        let truth = sample_configuration(chain, &mut rng);
        let target = chain.tool_pose(truth.as_slice());
        let noisy = truth
            .as_slice()
            .iter()
            .map(|a| a + settings.seed_noise * rng.sample::<f64, _>(StandardNormal))
            .collect::<Vec<_>>();
        let mut seed_q = JointConfig::new(noisy).expect("finite");
        seed_q = chain.clamp_to_limits(&seed_q).expect("dimension matches");

        let mut solver = IkSolver::new(cfg.clone()).expect("validated");
        let mut last = (f64::INFINITY, f64::INFINITY);
        for frame in 0..settings.max_frames {
            solver.set_seed(mix_seed(item_seed, frame as u64));
            let sol = solver
                .solve(chain, &target, &seed_q)
                .expect("dimension matches");
            last = (sol.position_residual, sol.rotation_residual);
            if sol.position_residual <= cfg.position_tolerance
                && sol.rotation_residual <= cfg.rotation_tolerance
            {
                return RoundTripOutcome {
                    frames: Some(frame + 1),
                    position_residual: last.0,
                    rotation_residual: last.1,
                };
            }
            seed_q = sol.q;
        }
        RoundTripOutcome {
            frames: None,
            position_residual: last.0,
            rotation_residual: last.1,
        }
    });
    Ok(RoundTripReport { outcomes })
}

/// Fraction of out-of-reach targets the solver flags as unreachable.
pub fn unreachable_flag_rate(
    chain: &KinematicChain,
    cfg: &IkConfig,
    n: usize,
    seed: u64,
    exec: Execution,
) -> Result<f64> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one target".into()));
    }
    let flagged = map_indexed(n, exec, |i| {
        let s = mix_seed(seed, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let target = sample_unreachable(chain, 1e-3, &mut rng);
        let start = sample_configuration(chain, &mut rng);
        let mut solver = IkSolver::new(cfg.clone()).expect("validated");
        solver.set_seed(s);
        let sol = solver.solve(chain, &target, &start).expect("dimension matches");
        !sol.reachable
    });
    Ok(flagged.iter().filter(|&&f| f).count() as f64 / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingReport {
    pub samples: usize,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Wall-clock time of `n` single-frame solves toward FK-sampled targets from
/// random seeds. Always sequential so timings are not skewed by contention.
pub fn time_solves(chain: &KinematicChain, cfg: &IkConfig, n: usize, seed: u64) -> Result<TimingReport> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one solve".into()));
    }
    let mut solver = IkSolver::new(cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = Vec::with_capacity(n);
    for i in 0..n {
        let target = chain.tool_pose(sample_configuration(chain, &mut rng).as_slice());
        let start = sample_configuration(chain, &mut rng);
        solver.set_seed(mix_seed(seed, i as u64));
        let t0 = Instant::now();
        let sol = solver.solve(chain, &target, &start)?;
        times.push(t0.elapsed());
        std::hint::black_box(sol);
    }
    Ok(timing_report(&times))
}

pub fn timing_report(times: &[Duration]) -> TimingReport {
    let mut ms: Vec<f64> = times.iter().map(|d| d.as_secs_f64() * 1e3).collect();
    ms.sort_by(f64::total_cmp);
    TimingReport {
        samples: ms.len(),
        median_ms: percentile(&ms, 50.0),
        p99_ms: percentile(&ms, 99.0),
        max_ms: ms.last().copied().unwrap_or(f64::NAN),
    }
}

/// Pose error of the tool at `q` against `target` (meters, radians).
pub fn residuals(chain: &KinematicChain, q: &JointConfig, target: &Pose) -> (f64, f64) {
    pose_error(&chain.tool_pose(q.as_slice()), target)
}
