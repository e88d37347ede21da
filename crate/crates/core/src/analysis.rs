//! Ensemble studies: robustness to positional noise, surrogate versus
//! retention correlation, and the spread of multi-start optimization.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use nalgebra::{Rotation3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{survival_modesum, SurvivalTrace, TimeGrid};
use crate::error::{Error, Result};
use crate::geometry::{perturb, AtomArray, Dipole, GeometryKind, GeometrySpec, Perturbation};
use crate::hamiltonian::build_hamiltonian;
use crate::optimizer::{multi_start, MultiStartResult, OptimizationProblem};
use crate::rng::{derive_seed, seeded};
use crate::spectral::{decompose, localized_state, mode_weights, ModeWeights, SpectralData};
use crate::surrogate::{surrogate_cost, SurrogateParams};

/// Threshold on the mean per-atom distance (λ0) for two structures to share
/// a cluster.
pub const CLUSTER_THRESHOLD: f64 = 0.02;

/// Decomposition, storage-atom weights and survival trace of one structure.
pub struct Evaluation {
    pub spectral: SpectralData,
    pub weights: ModeWeights,
    pub trace: SurvivalTrace,
}

pub fn evaluate(array: &AtomArray, grid: &TimeGrid) -> Result<Evaluation> {
    let h = build_hamiltonian(array)?;
    let spectral = decompose(&h)?;
    let weights = mode_weights(&spectral, &localized_state(array.len(), array.storage_index()))?;
    let trace = survival_modesum(&spectral, &weights, grid);
    Ok(Evaluation {
        spectral,
        weights,
        trace,
    })
}

/// Reference structure of the given kind, uniformly scaled about the storage
/// atom so that its closest pair sits at `r_min`.
pub fn reference_structure(kind: GeometryKind, n: usize, r_min: f64, dipole: Dipole) -> Result<AtomArray> {
    GeometrySpec::new(kind, n, 1.0, dipole).build()?.scaled_to_min_distance(r_min)
}

/// Linear-interpolation percentile (q in [0, 1]) of unsorted data.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, q)
}

fn percentile_sorted(v: &[f64], q: f64) -> f64 {
    assert!(!v.is_empty());
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] + (v[hi] - v[lo]) * frac
}

/// Pearson correlation via the centered-product formula. NaN when either
/// sample has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Pearson correlation from raw power sums.
pub fn pearson_raw(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sx += a;
        sy += b;
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub p10: Vec<f64>,
    pub median: Vec<f64>,
    pub p90: Vec<f64>,
    pub n_trials: usize,
    pub n_failed: usize,
    pub perturbation: Perturbation,
    pub master_seed: u64,
}

impl EnsembleSummary {
    /// `t,p10,p50,p90` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,p10,p50,p90\n");
        for i in 0..self.times.len() {
            let _ = writeln!(out, "{},{},{},{}", self.times[i], self.p10[i], self.median[i], self.p90[i]);
        }
        out
    }

    pub fn ordered(&self) -> bool {
        (0..self.times.len()).all(|i| self.p10[i] <= self.median[i] && self.median[i] <= self.p90[i])
    }
}

/// Survival traces of `n_trials` noisy copies of `base`; trial i draws from
/// `derive_seed(master_seed, i)`.
pub fn robustness_ensemble(
    base: &AtomArray,
    perturbation: &Perturbation,
    n_trials: usize,
    grid: &TimeGrid,
    master_seed: u64,
) -> Result<EnsembleSummary> {
    if n_trials < 2 {
        return Err(Error::InvalidInput("an ensemble needs at least two trials".into()));
    }
    let traces: Vec<Result<Vec<f64>>> = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded(derive_seed(master_seed, i as u64));
            let arr = perturb(base, perturbation, &mut rng)?;
            Ok(evaluate(&arr, grid)?.trace.p_e)
        })
        .collect();
    let ok: Vec<&Vec<f64>> = traces.iter().filter_map(|t| t.as_ref().ok()).collect();
    let n_failed = n_trials - ok.len();
    if ok.is_empty() {
        let first = traces[0].as_ref().err().map(|e| e.to_string()).unwrap_or_default();
        return Err(Error::AllRunsFailed(n_trials, first));
    }
    let m = grid.len();
    let (mut p10, mut median, mut p90) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
    let mut column = Vec::with_capacity(ok.len());
    for i in 0..m {
        column.clear();
        column.extend(ok.iter().map(|t| t[i]));
        column.sort_by(f64::total_cmp);
        p10.push(percentile_sorted(&column, 0.1));
        median.push(percentile_sorted(&column, 0.5));
        p90.push(percentile_sorted(&column, 0.9));
    }
    Ok(EnsembleSummary {
        times: grid.times().to_vec(),
        p10,
        median,
        p90,
        n_trials,
        n_failed,
        perturbation: *perturbation,
        master_seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StructureRow {
    pub id: usize,
    #[serde(rename = "F")]
    pub f: f64,
    pub min_gamma: f64,
    pub p_e: f64,
    pub p_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationPair {
    pub objective: String,
    pub metric: String,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub pairs: Vec<CorrelationPair>,
    pub sample_size: usize,
    pub n_failed: usize,
    pub rows: Vec<StructureRow>,
}

impl CorrelationReport {
    pub fn r(&self, objective: &str, metric: &str) -> Option<f64> {
        self.pairs
            .iter()
            .find(|p| p.objective == objective && p.metric == metric)
            .map(|p| p.r)
    }

    /// `structure,F,min_gamma,p_e,p_bar` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("structure,F,min_gamma,p_e,p_bar\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.id, r.f, r.min_gamma, r.p_e, r.p_bar);
        }
        out
    }

    /// `objective,metric,r` rows.
    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("objective,metric,r\n");
        for p in &self.pairs {
            let _ = writeln!(out, "{},{},{}", p.objective, p.metric, p.r);
        }
        out
    }
}

/// Scores noisy copies of `base` with F and min Γ/γ0 and correlates both
/// with p_e(t*) and its time average.
pub fn correlation_study(
    base: &AtomArray,
    perturbation: &Perturbation,
    n_structures: usize,
    grid: &TimeGrid,
    params: SurrogateParams,
    master_seed: u64,
) -> Result<CorrelationReport> {
    if n_structures < 3 {
        return Err(Error::InvalidInput("a correlation study needs at least three structures".into()));
    }
    let rows: Vec<Result<StructureRow>> = (0..n_structures)
        .into_par_iter()
        .map(|id| {
            let mut rng = seeded(derive_seed(master_seed, id as u64));
            let arr = perturb(base, perturbation, &mut rng)?;
            let ev = evaluate(&arr, grid)?;
            let score = surrogate_cost(&ev.spectral, &ev.weights, params);
            let min_gamma = (0..ev.spectral.len())
                .map(|l| ev.spectral.relative_rate(l))
                .fold(f64::INFINITY, f64::min);
            Ok(StructureRow {
                id,
                f: score.f,
                min_gamma,
                p_e: ev.trace.final_value(),
                p_bar: ev.trace.p_bar,
            })
        })
        .collect();
    let ok: Vec<StructureRow> = rows.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    let n_failed = n_structures - ok.len();
    if ok.len() < 3 {
        return Err(Error::NumericalFailure(format!("only {} of {n_structures} structures evaluated", ok.len())));
    }
    let col = |f: fn(&StructureRow) -> f64| ok.iter().map(f).collect::<Vec<f64>>();
    let f = col(|r| r.f);
    let g = col(|r| r.min_gamma);
    let pe = col(|r| r.p_e);
    let pb = col(|r| r.p_bar);
    let pair = |o: &str, m: &str, x: &[f64], y: &[f64]| CorrelationPair {
        objective: o.into(),
        metric: m.into(),
        r: pearson(x, y),
    };
    Ok(CorrelationReport {
        pairs: vec![
            pair("F", "p_e", &f, &pe),
            pair("F", "p_bar", &f, &pb),
            pair("min_gamma", "p_e", &g, &pe),
            pair("min_gamma", "p_bar", &g, &pb),
        ],
        sample_size: ok.len(),
        n_failed,
        rows: ok,
    })
}

/// Mean distance from each atom of `a`, rotated by `angle` about the z axis
/// through `center`, to its nearest atom of `b`.
fn rotated_mismatch(a: &[Vector3<f64>], b: &[Vector3<f64>], center: &Vector3<f64>, angle: f64) -> f64 {
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), angle);
    let total: f64 = a
        .iter()
        .map(|p| {
            let q = center + rot * (p - center);
            b.iter().map(|r| (q - r).norm()).fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / a.len() as f64
}

/// Structural distance after the best rotation about z through the storage
/// atom, with atoms matched to their nearest neighbours. Symmetrized.
pub fn structure_distance(a: &AtomArray, b: &AtomArray) -> f64 {
    let center = a.storage_position();
    let pa = a.positions();
    let pb = b.positions();
    let cost = |t: f64| 0.5 * (rotated_mismatch(pa, pb, &center, t) + rotated_mismatch(pb, pa, &center, -t));
    let coarse = 180;
    let step = TAU / coarse as f64;
    let (mut best_t, mut best) = (0.0, cost(0.0));
    for k in 1..coarse {
        let t = k as f64 * step;
        let c = cost(t);
        if c < best {
            best = c;
            best_t = t;
        }
    }
    // golden-section refinement around the coarse minimum
    let (mut lo, mut hi) = (best_t - step, best_t + step);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..40 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if cost(m1) < cost(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    best.min(cost(0.5 * (lo + hi)))
}

/// Greedy clustering: each structure joins the first cluster whose founding
/// member lies within `threshold`, otherwise it founds a new one.
pub fn greedy_clusters(structures: &[&AtomArray], threshold: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, s) in structures.iter().enumerate() {
        match clusters.iter_mut().find(|c| structure_distance(structures[c[0]], s) <= threshold) {
            Some(c) => c.push(i),
            None => clusters.push(vec![i]),
        }
    }
    clusters
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRunRow {
    pub run: usize,
    pub seed: u64,
    pub max_weight_abs: f64,
    pub gamma_rel: f64,
    #[serde(rename = "F")]
    pub f: f64,
    pub p_e: f64,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedDependenceReport {
    pub rows: Vec<SeedRunRow>,
    /// Run indices per cluster, in order of discovery.
    pub clusters: Vec<Vec<usize>>,
    /// Index into `clusters` of the most populated cluster.
    pub modal_cluster: usize,
    /// Lowest-F run of the modal cluster.
    pub representative_run: usize,
    pub representative: AtomArray,
    pub n_failed: usize,
    pub cluster_threshold: f64,
}

impl SeedDependenceReport {
    /// `run,seed,abs_w,gamma_rel,F,p_e,cluster` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("run,seed,abs_w,gamma_rel,F,p_e,cluster\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.run, r.seed, r.max_weight_abs, r.gamma_rel, r.f, r.p_e, r.cluster
            );
        }
        out
    }
}

/// Tabulates the dominant weight, its decay rate and F over `n_runs`
/// multi-start runs and clusters the final structures.
pub fn seed_dependence_study(
    problem: &OptimizationProblem,
    n_runs: usize,
    sigma: f64,
    master_seed: u64,
    grid: &TimeGrid,
) -> Result<(SeedDependenceReport, MultiStartResult)> {
    if n_runs < 1 {
        return Err(Error::InvalidInput("n_runs must be at least 1".into()));
    }
    let ms = multi_start(problem, n_runs, sigma, master_seed)?;
    let mut rows = Vec::new();
    let mut structures = Vec::new();
    for r in &ms.runs {
        let Ok(o) = &r.outcome else { continue };
        let ev = evaluate(&o.final_array, grid)?;
        let d = ev.weights.dominant();
        rows.push(SeedRunRow {
            run: r.run,
            seed: r.seed,
            max_weight_abs: ev.weights.weights[d].norm(),
            gamma_rel: ev.spectral.relative_rate(d),
            f: o.f_final,
            p_e: ev.trace.final_value(),
            cluster: 0,
        });
        structures.push(&o.final_array);
    }
    let local = greedy_clusters(&structures, CLUSTER_THRESHOLD);
    for (c, members) in local.iter().enumerate() {
        for &m in members {
            rows[m].cluster = c;
        }
    }
    let modal_cluster = (0..local.len())
        .max_by(|&a, &b| local[a].len().cmp(&local[b].len()).then(b.cmp(&a)))
        .expect("at least one successful run");
    let rep_local = *local[modal_cluster]
        .iter()
        .min_by(|&&a, &&b| rows[a].f.total_cmp(&rows[b].f))
        .expect("non-empty cluster");
    let representative = structures[rep_local].clone();
    let clusters = local
        .iter()
        .map(|c| c.iter().map(|&m| rows[m].run).collect())
        .collect();
    let report = SeedDependenceReport {
        representative_run: rows[rep_local].run,
        representative,
        modal_cluster,
        clusters,
        n_failed: ms.failures(),
        cluster_threshold: CLUSTER_THRESHOLD,
        rows,
    };
    Ok((report, ms))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles_interpolate() {
        let v = [3.0, 1.0, 2.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 5.0);
        assert!((percentile(&v, 0.1) - 1.4).abs() < 1e-15);
        assert!((percentile(&[1.0, 2.0], 0.9) - 1.9).abs() < 1e-15);
    }

    #[test]
    fn pearson_extremes() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3 - 1.0).collect();
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &y) + 1.0).abs() < 1e-15);
        assert!((pearson(&x, &x) - 1.0).abs() < 1e-15);
        assert!(pearson(&x, &vec![1.0; 20]).is_nan());
    }

    #[test]
    fn zero_noise_gives_zero_width_band() {
        let base = GeometrySpec::new(GeometryKind::Ring, 6, 0.3, Dipole::circular()).build().unwrap();
        let grid = TimeGrid::uniform(10.0, 101).unwrap();
        let summary = robustness_ensemble(&base, &Perturbation::xyz(0.0), 4, &grid, 1).unwrap();
        let reference = evaluate(&base, &grid).unwrap().trace.p_e;
        for i in 0..grid.len() {
            assert_eq!(summary.p10[i], summary.p90[i]);
            assert_eq!(summary.median[i], reference[i]);
        }
        assert_eq!(summary.n_failed, 0);
        assert!(summary.to_csv().starts_with("t,p10,p50,p90\n"));
    }

    #[test]
    fn reference_structures_have_requested_min_distance() {
        for kind in [GeometryKind::Ring, GeometryKind::Square, GeometryKind::Sunflower] {
            let s = reference_structure(kind, 10, 0.1, Dipole::circular()).unwrap();
            let d = crate::geometry::min_pair_distance(&s).unwrap();
            assert!((d - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn structure_distance_ignores_rotation() {
        let a = GeometrySpec::new(GeometryKind::Ring, 7, 0.3, Dipole::circular()).build().unwrap();
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), 0.37);
        let b = a.with_positions(a.positions().iter().map(|p| rot * p).collect()).unwrap();
        assert!(structure_distance(&a, &b) < 1e-6);
        let c = GeometrySpec::new(GeometryKind::Ring, 7, 0.35, Dipole::circular()).build().unwrap();
        let d = structure_distance(&a, &c);
        assert!((d - 0.05 * 7.0 / 8.0).abs() < 1e-6, "{d}");
        let clusters = greedy_clusters(&[&a, &c, &b], CLUSTER_THRESHOLD);
        assert_eq!(clusters, vec![vec![0, 2], vec![1]]);
    }
}
