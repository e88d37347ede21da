//! Inverse design of the surrounding atoms.
//!
//! Minimizes the surrogate cost over the in-plane coordinates of every
//! non-storage atom subject to |r_a − r_b|² ≥ r_min² for all pairs. The
//! storage atom and all z coordinates stay fixed.

pub mod qp;
pub mod sqp;

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{min_pair_distance, perturb, AtomArray, Perturbation};
use crate::rng::{derive_seed, seeded};
use crate::surrogate::{surrogate_for_array, SurrogateParams};

pub use sqp::{SqpSettings, Termination};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Sqp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub strategy: Strategy,
    pub max_iterations: usize,
    /// Objective change regarded as converged (relative to 1 + |F|).
    pub ftol: f64,
    /// Allowed violation of the minimum distance, in λ0.
    pub ctol: f64,
    /// Largest QP step below which the iterate is stationary.
    pub xtol: f64,
    /// Central-difference step in λ0.
    pub fd_step: f64,
    /// Per-coordinate cap on a single step, in λ0.
    pub max_step: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            strategy: Strategy::Sqp,
            max_iterations: 500,
            ftol: 1e-8,
            ctol: 1e-9,
            xtol: 1e-9,
            fd_step: 1e-6,
            max_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    pub seed: AtomArray,
    pub r_min: f64,
    #[serde(default)]
    pub params: SurrogateParams,
    #[serde(default)]
    pub settings: OptimizerSettings,
}

impl OptimizationProblem {
    pub fn new(seed: AtomArray, r_min: f64, params: SurrogateParams) -> Result<Self> {
        let p = Self {
            seed,
            r_min,
            params,
            settings: OptimizerSettings::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_settings(mut self, settings: OptimizerSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_min > 0.0) || !self.r_min.is_finite() {
            return Err(Error::InvalidInput(format!("r_min must be positive (got {})", self.r_min)));
        }
        let s = &self.settings;
        if s.max_iterations == 0 || !(s.fd_step > 0.0) || !(s.max_step > 0.0) || !(s.ctol >= 0.0) {
            return Err(Error::InvalidInput("optimizer settings out of range".into()));
        }
        if self.seed.len() < 2 {
            return Err(Error::InvalidInput("optimization needs at least one movable atom".into()));
        }
        Ok(())
    }

    /// Every atom except the storage atom.
    pub fn movable(&self) -> Vec<usize> {
        (0..self.seed.len()).filter(|&i| i != self.seed.storage_index()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    #[serde(rename = "final")]
    pub final_array: AtomArray,
    #[serde(rename = "F_initial")]
    pub f_initial: f64,
    #[serde(rename = "F_final")]
    pub f_final: f64,
    pub cost_trace: Vec<f64>,
    pub feasible: bool,
    pub converged: bool,
    pub termination: Termination,
    pub seed_id: Option<u64>,
    pub iterations: usize,
    pub evaluations: usize,
    /// Whether the starting structure had to be pushed into the feasible set.
    pub restored: bool,
    pub min_distance: f64,
}

struct Design<'a> {
    template: &'a AtomArray,
    movable: Vec<usize>,
    r_min: f64,
    ctol: f64,
    params: SurrogateParams,
    /// (a, b) with a < b
    pairs: Vec<(usize, usize)>,
    /// position of each atom in the design vector, if movable
    slot: Vec<Option<usize>>,
}

impl<'a> Design<'a> {
    fn new(template: &'a AtomArray, r_min: f64, ctol: f64, params: SurrogateParams) -> Self {
        let n = template.len();
        let movable: Vec<usize> = (0..n).filter(|&i| i != template.storage_index()).collect();
        let mut slot = vec![None; n];
        for (k, &i) in movable.iter().enumerate() {
            slot[i] = Some(k);
        }
        let pairs = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        Self {
            template,
            movable,
            r_min,
            ctol,
            params,
            pairs,
            slot,
        }
    }

    fn encode(&self, positions: &[Vector3<f64>]) -> DVector<f64> {
        let mut x = DVector::zeros(2 * self.movable.len());
        for (k, &i) in self.movable.iter().enumerate() {
            x[2 * k] = positions[i].x;
            x[2 * k + 1] = positions[i].y;
        }
        x
    }

    fn decode(&self, x: &DVector<f64>) -> Vec<Vector3<f64>> {
        let mut pos = self.template.positions().to_vec();
        for (k, &i) in self.movable.iter().enumerate() {
            pos[i].x = x[2 * k];
            pos[i].y = x[2 * k + 1];
        }
        pos
    }

    fn array(&self, x: &DVector<f64>) -> Result<AtomArray> {
        self.template.with_positions(self.decode(x))
    }
}

impl sqp::NlpProblem for Design<'_> {
    fn dim(&self) -> usize {
        2 * self.movable.len()
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        match self.array(x).and_then(|a| surrogate_for_array(&a, self.params)) {
            Ok(s) if s.f.is_finite() => s.f,
            _ => f64::INFINITY,
        }
    }

    fn constraint_set(&self, x: &DVector<f64>, max_step: f64) -> Vec<usize> {
        // a pair moves apart or together by at most 2√2·max_step in one step
        let reach = self.r_min + 2.0 * std::f64::consts::SQRT_2 * max_step + 1e-9;
        let pos = self.decode(x);
        (0..self.pairs.len())
            .filter(|&p| {
                let (a, b) = self.pairs[p];
                (pos[a] - pos[b]).norm() < reach
            })
            .collect()
    }

    fn constraints(&self, x: &DVector<f64>, set: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
        let pos = self.decode(x);
        let mut values = DVector::zeros(set.len());
        let mut jac = DMatrix::zeros(set.len(), self.dim());
        for (row, &p) in set.iter().enumerate() {
            let (a, b) = self.pairs[p];
            let d = pos[a] - pos[b];
            values[row] = d.norm_squared() - self.r_min * self.r_min;
            if let Some(k) = self.slot[a] {
                jac[(row, 2 * k)] = 2.0 * d.x;
                jac[(row, 2 * k + 1)] = 2.0 * d.y;
            }
            if let Some(k) = self.slot[b] {
                jac[(row, 2 * k)] = -2.0 * d.x;
                jac[(row, 2 * k + 1)] = -2.0 * d.y;
            }
        }
        (values, jac)
    }

    fn is_feasible(&self, x: &DVector<f64>) -> bool {
        let pos = self.decode(x);
        let bound = self.r_min - self.ctol;
        self.pairs.iter().all(|&(a, b)| (pos[a] - pos[b]).norm() >= bound)
    }
}

/// Pushes violating pairs apart in the plane until every separation reaches
/// r_min. Returns the restored positions or `InfeasibleSeed`.
pub fn restore_feasibility(array: &AtomArray, r_min: f64, ctol: f64) -> Result<(AtomArray, bool)> {
    let mut pos = array.positions().to_vec();
    let storage = array.storage_index();
    let n = pos.len();
    let target = r_min * (1.0 + 1e-6);
    let mut changed = false;
    for sweep in 0..5000 {
        let mut violated = false;
        for a in 0..n {
            for b in a + 1..n {
                let d = pos[a] - pos[b];
                if d.norm() >= r_min - ctol {
                    continue;
                }
                violated = true;
                changed = true;
                let dz2 = d.z * d.z;
                let need = (target * target - dz2).max(0.0).sqrt();
                let planar = (d.x * d.x + d.y * d.y).sqrt();
                let dir = if planar > 1e-12 {
                    Vector3::new(d.x / planar, d.y / planar, 0.0)
                } else {
                    let t = (a * n + b + sweep) as f64;
                    Vector3::new(t.cos(), t.sin(), 0.0)
                };
                let deficit = need - planar;
                match (a == storage, b == storage) {
                    (true, _) => pos[b] -= dir * deficit,
                    (_, true) => pos[a] += dir * deficit,
                    _ => {
                        pos[a] += dir * (0.5 * deficit);
                        pos[b] -= dir * (0.5 * deficit);
                    }
                }
            }
        }
        if !violated {
            let restored = array.with_positions(pos)?;
            return Ok((restored, changed));
        }
    }
    let min_distance = crate::geometry::min_distance_of(&pos).unwrap_or(0.0);
    Err(Error::InfeasibleSeed { min_distance, r_min })
}

/// Locally minimizes F from the problem's seed.
pub fn optimize(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    optimize_with_id(problem, None)
}

fn optimize_with_id(problem: &OptimizationProblem, seed_id: Option<u64>) -> Result<OptimizationResult> {
    problem.validate()?;
    let s = &problem.settings;
    let (start, restored) = restore_feasibility(&problem.seed, problem.r_min, s.ctol)?;
    let design = Design::new(&start, problem.r_min, s.ctol, problem.params);
    let x0 = design.encode(start.positions());
    let f_initial = sqp::NlpProblem::objective(&design, &x0);
    if !f_initial.is_finite() {
        return Err(Error::NumericalFailure("surrogate cost of the seed cannot be evaluated".into()));
    }
    let out = sqp::minimize(
        &design,
        x0,
        &SqpSettings {
            max_iterations: s.max_iterations,
            ftol: s.ftol,
            xtol: s.xtol,
            fd_step: s.fd_step,
            max_step: s.max_step,
        },
    );
    let final_array = design.array(&out.x)?;
    let min_distance = min_pair_distance(&final_array)?;
    Ok(OptimizationResult {
        final_array,
        f_initial,
        f_final: out.f,
        cost_trace: out.trace,
        feasible: min_distance >= problem.r_min - s.ctol,
        converged: out.termination.converged(),
        termination: out.termination,
        seed_id,
        iterations: out.iterations,
        evaluations: out.evaluations,
        restored,
        min_distance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub outcome: Result<OptimizationResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStartResult {
    pub master_seed: u64,
    pub sigma: f64,
    pub runs: Vec<RunRecord>,
    pub best: usize,
}

impl MultiStartResult {
    pub fn best_result(&self) -> &OptimizationResult {
        self.runs[self.best].outcome.as_ref().expect("best run succeeded")
    }

    pub fn successes(&self) -> impl Iterator<Item = &OptimizationResult> {
        self.runs.iter().filter_map(|r| r.outcome.as_ref().ok())
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.outcome.is_err()).count()
    }

    /// Best F among the first k runs, for k = 1..=n_runs.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.runs
            .iter()
            .map(|r| {
                if let Ok(o) = &r.outcome {
                    best = best.min(o.f_final);
                }
                best
            })
            .collect()
    }
}

/// Starting structure of run `run`: xy Gaussian noise of std `sigma` on
/// every non-storage atom, drawn from `derive_seed(master_seed, run)`.
pub fn perturbed_seed(problem: &OptimizationProblem, sigma: f64, seed: u64) -> Result<AtomArray> {
    let mut rng = seeded(seed);
    perturb(&problem.seed, &Perturbation::xy(sigma), &mut rng)
}

/// Runs `optimize` from `n_runs` independently perturbed seeds in parallel.
/// Results are ordered by run index; `best` is the lowest final F.
pub fn multi_start(problem: &OptimizationProblem, n_runs: usize, sigma: f64, master_seed: u64) -> Result<MultiStartResult> {
    problem.validate()?;
    if n_runs == 0 {
        return Err(Error::InvalidInput("n_runs must be at least 1".into()));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!("sigma must be non-negative (got {sigma})")));
    }
    let runs: Vec<RunRecord> = (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let seed = derive_seed(master_seed, run as u64);
            let outcome = perturbed_seed(problem, sigma, seed).and_then(|start| {
                let p = OptimizationProblem {
                    seed: start,
                    ..problem.clone()
                };
                optimize_with_id(&p, Some(seed))
            });
            RunRecord { run, seed, outcome }
        })
        .collect();
    let mut best: Option<usize> = None;
    for (i, r) in runs.iter().enumerate() {
        if let Ok(o) = &r.outcome {
            if best.is_none_or(|b| o.f_final < runs[b].outcome.as_ref().map(|x| x.f_final).unwrap_or(f64::INFINITY)) {
                best = Some(i);
            }
        }
    }
    match best {
        Some(best) => Ok(MultiStartResult {
            master_seed,
            sigma,
            runs,
            best,
        }),
        None => {
            let first = runs[0].outcome.as_ref().err().map(|e| e.to_string()).unwrap_or_default();
            Err(Error::AllRunsFailed(n_runs, first))
        }
    }
}
