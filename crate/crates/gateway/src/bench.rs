use armtwin_core::batch::{round_trip, time_solves, unreachable_flag_rate, Execution, RoundTripSettings};
use armtwin_core::ik::IkConfig;
use armtwin_core::kinematics::KinematicChain;
use serde::Serialize;

use crate::error::{GatewayError, Result};

/// One frame at 35 Hz, in milliseconds.
pub const FRAME_BUDGET_MS: f64 = 1000.0 / 35.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub targets: usize,
    pub seed: u64,
    pub population: usize,
    pub generations: usize,
    /// FK targets reaching tolerance within the frame allowance
    pub passed: usize,
    pub pass_rate: f64,
    pub max_frames: usize,
    /// fraction of out-of-reach targets reported unreachable
    pub unreachable_flagged: f64,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub budget_ms: f64,
    pub within_budget: bool,
}

impl BenchReport {
    /// The report without wall-clock fields; equal across runs with one seed.
    pub fn deterministic_part(&self) -> (usize, u64, usize, usize, usize, u64, u64) {
        (
            self.targets,
            self.seed,
            self.population,
            self.generations,
            self.passed,
            self.pass_rate.to_bits(),
            self.unreachable_flagged.to_bits(),
        )
    }
}

pub fn bench_ik(chain: &KinematicChain, cfg: &IkConfig, n: usize, seed: u64, exec: Execution) -> Result<BenchReport> {
    if n == 0 {
        return Err(GatewayError::Config("bench needs at least one target".into()));
    }
    let settings = RoundTripSettings {
        targets: n,
        seed,
        ..RoundTripSettings::default()
    };
    let rt = round_trip(chain, cfg, &settings, exec)?;
    let flagged = unreachable_flag_rate(chain, cfg, n, seed, exec)?;
    let timing = time_solves(chain, cfg, n, seed)?;
    Ok(BenchReport {
        targets: n,
        seed,
        population: cfg.population_size,
        generations: cfg.generations_per_frame,
        passed: rt.passed(),
        pass_rate: rt.pass_rate(),
        max_frames: settings.max_frames,
        unreachable_flagged: flagged,
        median_ms: timing.median_ms,
        p99_ms: timing.p99_ms,
        max_ms: timing.max_ms,
        budget_ms: FRAME_BUDGET_MS,
        within_budget: timing.p99_ms <= FRAME_BUDGET_MS,
    })
}
