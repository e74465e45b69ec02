//! Evolutionary inverse kinematics with a fixed per-frame budget.
//!
//! Each call to [`solve`] runs a (mu + lambda) evolution strategy for exactly
//! `generations_per_frame` generations over `population_size` joint vectors:
//!
//! 1. the population is seeded around the warm-start configuration (one
//!    individual is the seed itself, the others are Gaussian perturbations);
//! 2. every generation ranks by fitness, keeps the elite fraction unchanged and
//!    refills the rest by blend crossover of two elites followed by Gaussian
//!    mutation, clamped to the joint limits;
//! 3. the best individual is returned.
//!
//! Mutation strength shrinks with the parents' fitness (capped by
//! `mutation_sigma`) so that warm-started solving across frames converges to
//! sub-millimetre residuals instead of stalling at the mutation noise floor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{pose_error, JointConfig, KinematicChain, Pose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IkConfig {
    pub population_size: usize,
    pub generations_per_frame: usize,
    pub smoothing_alpha: f64,
    /// meters
    pub position_tolerance: f64,
    /// radians
    pub rotation_tolerance: f64,
    pub position_weight: f64,
    pub rotation_weight: f64,
    pub rng_seed: u64,
    /// Upper bound on the per-gene mutation standard deviation, radians.
    pub mutation_sigma: f64,
    /// Standard deviation of the seed-centered initial population, radians.
    pub init_sigma: f64,
    pub elite_fraction: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            population_size: 120,
            generations_per_frame: 3,
            smoothing_alpha: 0.5,
            position_tolerance: 0.001,
            rotation_tolerance: 0.0087,
            position_weight: 1.0,
            rotation_weight: 0.2,
            rng_seed: 0,
            mutation_sigma: 0.05,
            init_sigma: 0.3,
            elite_fraction: 0.2,
        }
    }
}

impl IkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        if self.population_size < 2 {
            return bad("population_size must be at least 2");
        }
        if self.generations_per_frame < 1 {
            return bad("generations_per_frame must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.smoothing_alpha) {
            return bad("smoothing_alpha must lie in [0, 1]");
        }
        if !(self.position_tolerance > 0.0 && self.rotation_tolerance > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction < 1.0) {
            return bad("elite_fraction must lie in (0, 1)");
        }
        if !(self.position_weight >= 0.0 && self.rotation_weight >= 0.0)
            || self.position_weight + self.rotation_weight <= 0.0
        {
            return bad("fitness weights must be non-negative and not both zero");
        }
        if !(self.mutation_sigma > 0.0 && self.init_sigma >= 0.0) {
            return bad("mutation_sigma must be positive and init_sigma non-negative");
        }
        Ok(())
    }

    fn elite_count(&self) -> usize {
        ((self.elite_fraction * self.population_size as f64).round() as usize)
            .clamp(1, self.population_size - 1)
    }

    fn weighted(&self, position_error: f64, rotation_error: f64) -> f64 {
        (self.position_weight * position_error).hypot(self.rotation_weight * rotation_error)
    }

    fn within_tolerance(&self, position_error: f64, rotation_error: f64) -> bool {
        position_error <= self.position_tolerance && rotation_error <= self.rotation_tolerance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IkSolution {
    pub q: JointConfig,
    pub position_residual: f64,
    pub rotation_residual: f64,
    pub reachable: bool,
    pub generations_used: usize,
}

/// Weighted pose error of the tool at `q` against `target`:
/// `hypot(position_weight * position_error, rotation_weight * rotation_error)`.
///
/// The root-sum-square keeps the landscape smooth along the set of
/// configurations that already hit the target position, where a linear sum of
/// the two norms forms a knife edge that stalls the rotation search.
pub fn fitness(chain: &KinematicChain, q: &JointConfig, target: &Pose, cfg: &IkConfig) -> Result<f64> {
    chain.check_dimension(q.len())?;
    let (dp, dr) = pose_error(&chain.tool_pose(q.as_slice()), target);
    Ok(cfg.weighted(dp, dr))
}

/// Per-joint blend `alpha * previous + (1 - alpha) * solved`.
pub fn smooth(previous: &JointConfig, solved: &JointConfig, alpha: f64) -> Result<JointConfig> {
    if previous.len() != solved.len() {
        return Err(Error::DimensionMismatch {
            expected: previous.len(),
            actual: solved.len(),
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "smoothing alpha {alpha} outside [0, 1]"
        )));
    }
    let blended = previous
        .as_slice()
        .iter()
        .zip(solved.as_slice())
        .map(|(p, s)| alpha * p + (1.0 - alpha) * s)
        .collect();
    JointConfig::new(blended)
}

/// Runs one frame's worth of evolution from `seed` toward `target`.
pub fn solve(
    chain: &KinematicChain,
    target: &Pose,
    seed: &JointConfig,
    cfg: &IkConfig,
) -> Result<IkSolution> {
    IkSolver::new(cfg.clone())?.solve(chain, target, seed)
}

/// Like [`solve`] but also returns the best fitness after initialization and
/// after every generation.
pub fn solve_traced(
    chain: &KinematicChain,
    target: &Pose,
    seed: &JointConfig,
    cfg: &IkConfig,
) -> Result<(IkSolution, Vec<f64>)> {
    let mut solver = IkSolver::new(cfg.clone())?;
    let mut trace = Vec::with_capacity(cfg.generations_per_frame + 1);
    let sol = solver.run(chain, target, seed, Some(&mut trace))?;
    Ok((sol, trace))
}

/// Reusable solver holding the population buffers.
///
/// The RNG is re-seeded from `rng_seed` on every call, so results depend only
/// on the inputs.
#[derive(Clone, Debug)]
pub struct IkSolver {
    cfg: IkConfig,
    genes: Vec<f64>,
    next: Vec<f64>,
    scores: Vec<Score>,
    next_scores: Vec<Score>,
    order: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default)]
struct Score {
    fitness: f64,
    position: f64,
    rotation: f64,
}

/// Mutation sigma per unit of parent fitness (rad per weighted meter).
const ADAPT_GAIN: f64 = 2.0;
/// Spread of the log-normal factor applied to each child's mutation sigma.
const SIGMA_SPREAD: f64 = 1.0;

impl IkSolver {
    pub fn new(cfg: IkConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            genes: Vec::new(),
            next: Vec::new(),
            scores: Vec::new(),
            next_scores: Vec::new(),
            order: Vec::new(),
        })
    }

    pub fn config(&self) -> &IkConfig {
        &self.cfg
    }

    pub fn set_seed(&mut self, rng_seed: u64) {
        self.cfg.rng_seed = rng_seed;
    }

    pub fn solve(
        &mut self,
        chain: &KinematicChain,
        target: &Pose,
        seed: &JointConfig,
    ) -> Result<IkSolution> {
        self.run(chain, target, seed, None)
    }

    fn evaluate(&self, chain: &KinematicChain, target: &Pose, genes: &[f64]) -> Score {
        let (position, rotation) = pose_error(&chain.tool_pose(genes), target);
        Score {
            fitness: self.cfg.weighted(position, rotation),
            position,
            rotation,
        }
    }

    fn sigma_for(&self, parent_fitness: f64, cap: f64, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (ADAPT_GAIN * parent_fitness * (SIGMA_SPREAD * z).exp()).min(cap)
    }

    fn run(
        &mut self,
        chain: &KinematicChain,
        target: &Pose,
        seed: &JointConfig,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<IkSolution> {
        chain.check_dimension(seed.len())?;
        let dof = chain.dof();
        let pop = self.cfg.population_size;
        let n_elite = self.cfg.elite_count();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.rng_seed);

        let mut start = seed.as_slice().to_vec();
        chain.clamp_in_place(&mut start);

        self.genes.clear();
        self.genes.resize(pop * dof, 0.0);
        self.next.clear();
        self.next.resize(pop * dof, 0.0);
        self.scores.clear();
        self.scores.resize(pop, Score::default());
        self.next_scores.clear();
        self.next_scores.resize(pop, Score::default());

        self.genes[..dof].copy_from_slice(&start);
        let seed_score = self.evaluate(chain, target, &start);
        self.scores[0] = seed_score;
        for i in 1..pop {
            // Half of the population explores at the full initial spread, the
            // other half samples close to the seed.
            let sigma = if i % 2 == 1 {
                self.cfg.init_sigma
            } else {
                self.sigma_for(seed_score.fitness, self.cfg.init_sigma, &mut rng)
            };
            let ind = &mut self.genes[i * dof..(i + 1) * dof];
            for (g, s) in ind.iter_mut().zip(&start) {
                let z: f64 = rng.sample(StandardNormal);
                *g = s + sigma * z;
            }
            chain.clamp_in_place(ind);
            self.scores[i] = self.evaluate(chain, target, &self.genes[i * dof..(i + 1) * dof]);
        }
        self.rank();
        if let Some(t) = trace.as_deref_mut() {
            t.push(self.scores[self.order[0]].fitness);
        }

        for _ in 0..self.cfg.generations_per_frame {
            // elites carry over unchanged
            for (slot, &idx) in self.order[..n_elite].iter().enumerate() {
                self.next[slot * dof..(slot + 1) * dof]
                    .copy_from_slice(&self.genes[idx * dof..(idx + 1) * dof]);
                self.next_scores[slot] = self.scores[idx];
            }
            for slot in n_elite..pop {
                let a = self.order[rng.random_range(0..n_elite)];
                let b = self.order[rng.random_range(0..n_elite)];
                let w: f64 = rng.random();
                let parent_fitness = self.scores[a].fitness.min(self.scores[b].fitness);
                let sigma = self.sigma_for(parent_fitness, self.cfg.mutation_sigma, &mut rng);
                for j in 0..dof {
                    let ga = self.genes[a * dof + j];
                    let gb = self.genes[b * dof + j];
                    let z: f64 = rng.sample(StandardNormal);
                    self.next[slot * dof + j] = ga + w * (gb - ga) + sigma * z;
                }
                let child = &mut self.next[slot * dof..(slot + 1) * dof];
                chain.clamp_in_place(child);
                self.next_scores[slot] =
                    self.evaluate(chain, target, &self.next[slot * dof..(slot + 1) * dof]);
            }
            std::mem::swap(&mut self.genes, &mut self.next);
            std::mem::swap(&mut self.scores, &mut self.next_scores);
            self.rank();
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.scores[self.order[0]].fitness);
            }
        }

        let best = self.order[0];
        let s = self.scores[best];
        Ok(IkSolution {
            q: JointConfig::new(self.genes[best * dof..(best + 1) * dof].to_vec())?,
            position_residual: s.position,
            rotation_residual: s.rotation,
            reachable: self.cfg.within_tolerance(s.position, s.rotation),
            generations_used: self.cfg.generations_per_frame,
        })
    }

    fn rank(&mut self) {
        let scores = &self.scores;
        self.order.clear();
        self.order.extend(0..scores.len());
        self.order.sort_by(|&i, &j| {
            scores[i]
                .fitness
                .total_cmp(&scores[j].fitness)
                .then(i.cmp(&j))
        });
    }
}
