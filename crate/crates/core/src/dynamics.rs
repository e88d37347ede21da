//! Survival probability of the initial excitation.
//!
//! Two independent routes: the biorthogonal mode sum
//! p_e(t) = |Σ_ℓ w_ℓ e^{−iκ_ℓ t}|², and direct RK4 propagation of
//! dc/dt = −iHc.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::EffectiveHamiltonian;
use crate::spectral::{ModeWeights, SpectralData};

/// Default horizon γ0·t* and sample count.
pub const DEFAULT_T_STAR: f64 = 30.0;
pub const DEFAULT_SAMPLES: usize = 3001;

/// Sample times starting at 0, strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidInput("time grid needs at least two samples".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidInput("time grid must start at t = 0".into()));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("time grid must be finite and strictly increasing".into()));
        }
        Ok(Self(times))
    }

    /// `samples` equally spaced points on [0, t_end].
    pub fn uniform(t_end: f64, samples: usize) -> Result<Self> {
        if !(t_end > 0.0) || samples < 2 {
            return Err(Error::InvalidInput(format!("bad uniform grid: t_end = {t_end}, samples = {samples}")));
        }
        let step = t_end / (samples - 1) as f64;
        let mut times: Vec<f64> = (0..samples).map(|i| i as f64 * step).collect();
        times[samples - 1] = t_end;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.0
    }

    pub fn end(&self) -> f64 {
        *self.0.last().expect("non-empty")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self::uniform(DEFAULT_T_STAR, DEFAULT_SAMPLES).expect("valid default grid")
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Self {
        g.0
    }
}

/// p_e sampled on a grid, with its time average over [0, t*] where t* is the
/// last grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalTrace {
    pub times: Vec<f64>,
    pub p_e: Vec<f64>,
    pub p_bar: f64,
    pub t_star: f64,
}

impl SurvivalTrace {
    fn from_samples(times: &[f64], p_e: Vec<f64>) -> Self {
        let t_star = *times.last().expect("non-empty grid");
        let p_bar = trapezoid(times, &p_e) / t_star;
        Self {
            times: times.to_vec(),
            p_e,
            p_bar,
            t_star,
        }
    }

    /// p_e(t*).
    pub fn final_value(&self) -> f64 {
        *self.p_e.last().expect("non-empty trace")
    }

    pub fn max_abs_difference(&self, other: &SurvivalTrace) -> f64 {
        self.p_e
            .iter()
            .zip(&other.p_e)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `t,p_e` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,p_e\n");
        for (t, p) in self.times.iter().zip(&self.p_e) {
            let _ = writeln!(out, "{t},{p}");
        }
        out
    }
}

/// Trapezoidal integral of samples `y` over `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// p_e(t) = |Σ_ℓ w_ℓ e^{−iκ_ℓ t}|².
pub fn survival_modesum(s: &SpectralData, w: &ModeWeights, grid: &TimeGrid) -> SurvivalTrace {
    let p_e = grid
        .times()
        .iter()
        .map(|&t| {
            let amp: Complex64 = s
                .eigenvalues
                .iter()
                .zip(&w.weights)
                .map(|(k, wl)| wl * (Complex64::new(0.0, -t) * k).exp())
                .sum();
            amp.norm_sqr()
        })
        .collect();
    SurvivalTrace::from_samples(grid.times(), p_e)
}

/// (Σ_ℓ |w_ℓ| e^{−Γ_ℓ t/2})², a pointwise upper bound on p_e(t).
pub fn modesum_envelope(s: &SpectralData, w: &ModeWeights, grid: &TimeGrid) -> Vec<f64> {
    grid.times()
        .iter()
        .map(|&t| {
            let a: f64 = s
                .decay_rates
                .iter()
                .zip(&w.weights)
                .map(|(g, wl)| wl.norm() * (-0.5 * g * t).exp())
                .sum();
            a * a
        })
        .collect()
}

/// Substep control for the RK4 propagator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepping {
    /// Substeps no longer than `ACCURACY_FACTOR` times the stability bound.
    Auto,
    /// Exactly this many substeps per grid interval.
    Fixed(usize),
}

/// Fraction of the step bound used by `Stepping::Auto`.
pub const ACCURACY_FACTOR: f64 = 0.25;

/// Largest admissible RK4 step: min(0.01/γ0, 0.1/‖H‖_F).
pub fn step_bound(h: &EffectiveHamiltonian) -> f64 {
    (0.01 / h.gamma0).min(0.1 / h.frobenius_norm())
}

/// Propagates dc/dt = −iHc with classical RK4 and returns |⟨c(0)|c(t)⟩|².
///
/// The norm of c is checked after every substep and must not grow.
pub fn survival_ode(
    h: &EffectiveHamiltonian,
    initial_state: &DVector<Complex64>,
    grid: &TimeGrid,
    stepping: Stepping,
) -> Result<SurvivalTrace> {
    let n = h.n_atoms();
    if initial_state.len() != n {
        return Err(Error::InvalidInput(format!(
            "initial state has {} entries, expected {n}",
            initial_state.len()
        )));
    }
    let bound = step_bound(h);
    let minus_i_h = h.h.map(|z| Complex64::new(z.im, -z.re));
    let rhs = |c: &DVector<Complex64>| &minus_i_h * c;

    let c0 = initial_state.clone();
    let mut c = c0.clone();
    let mut norm2 = c.norm_squared();
    let times = grid.times();
    let mut p_e = Vec::with_capacity(times.len());
    p_e.push(c0.dotc(&c).norm_sqr());
    for win in times.windows(2) {
        let dt = win[1] - win[0];
        let m = match stepping {
            Stepping::Auto => (dt / (ACCURACY_FACTOR * bound)).ceil().max(1.0) as usize,
            Stepping::Fixed(m) => {
                let step = dt / m.max(1) as f64;
                if m == 0 || step > bound * (1.0 + 1e-12) {
                    return Err(Error::StepTooLarge { step, bound });
                }
                m
            }
        };
        let step = dt / m as f64;
        let half = Complex64::new(0.5 * step, 0.0);
        let full = Complex64::new(step, 0.0);
        let sixth = Complex64::new(step / 6.0, 0.0);
        for _ in 0..m {
            let k1 = rhs(&c);
            let k2 = rhs(&(&c + &k1 * half));
            let k3 = rhs(&(&c + &k2 * half));
            let k4 = rhs(&(&c + &k3 * full));
            c += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4) * sixth;
            let next = c.norm_squared();
            if next > norm2 * (1.0 + 1e-12) {
                return Err(Error::NumericalFailure(format!(
                    "state norm grew from {norm2:e} to {next:e} at t = {}",
                    win[0]
                )));
            }
            norm2 = next;
        }
        p_e.push(c0.dotc(&c).norm_sqr());
    }
    Ok(SurvivalTrace::from_samples(times, p_e))
}

/// Two dominant modes of the expansion and the interference term they produce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoModeModel {
    pub modes: (usize, usize),
    /// Re κ_1 − Re κ_2.
    pub delta12: f64,
    /// arg(w_1* w_2).
    pub phase: f64,
    pub amplitudes: (f64, f64),
    pub rates: (f64, f64),
    pub period: f64,
}

impl TwoModeModel {
    /// |w1|² e^{−Γ1 t} + |w2|² e^{−Γ2 t} + 2|w1||w2| cos(Δ12 t + φ) e^{−(Γ1+Γ2)t/2}.
    pub fn evaluate(&self, t: f64) -> f64 {
        let (a1, a2) = self.amplitudes;
        let (g1, g2) = self.rates;
        a1 * a1 * (-g1 * t).exp()
            + a2 * a2 * (-g2 * t).exp()
            + 2.0 * a1 * a2 * (self.delta12 * t + self.phase).cos() * (-0.5 * (g1 + g2) * t).exp()
    }

    /// Number of oscillation periods that fit in [0, t].
    pub fn cycles(&self, t: f64) -> f64 {
        t / self.period
    }
}

/// Picks the two modes with the largest p_ℓ (lower index first on ties).
pub fn two_mode_analysis(s: &SpectralData, w: &ModeWeights) -> Result<TwoModeModel> {
    if s.len() < 2 {
        return Err(Error::InvalidInput("two-mode analysis needs at least two modes".into()));
    }
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| w.normalized_magnitudes[b].total_cmp(&w.normalized_magnitudes[a]).then(a.cmp(&b)));
    let (m1, m2) = (idx[0], idx[1]);
    let delta12 = s.eigenvalues[m1].re - s.eigenvalues[m2].re;
    if delta12.abs() < 1e-12 {
        return Err(Error::DegenerateSplit(delta12));
    }
    let w1 = w.weights[m1];
    let w2 = w.weights[m2];
    Ok(TwoModeModel {
        modes: (m1, m2),
        delta12,
        phase: (w1.conj() * w2).arg(),
        amplitudes: (w1.norm(), w2.norm()),
        rates: (s.decay_rates[m1], s.decay_rates[m2]),
        period: TAU / delta12.abs(),
    })
}

/// Count of interior samples strictly above the previous sample and not
/// below the next one.
pub fn count_local_maxima(values: &[f64]) -> usize {
    values
        .windows(3)
        .filter(|w| w[1] > w[0] && w[1] >= w[2])
        .count()
}

/// `t,p_e_modesum,p_e_ode,abs_diff` rows for two traces on the same grid.
pub fn comparison_csv(modesum: &SurvivalTrace, ode: &SurvivalTrace) -> String {
    let mut out = String::from("t,p_e_modesum,p_e_ode,abs_diff\n");
    for ((t, a), b) in modesum.times.iter().zip(&modesum.p_e).zip(&ode.p_e) {
        let _ = writeln!(out, "{t},{a},{b},{}", (a - b).abs());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{AtomArray, Dipole};
    use crate::hamiltonian::build_hamiltonian;
    use crate::spectral::{decompose, decompose_matrix, localized_state, mode_weights};
    use nalgebra::{DMatrix, Vector3};

    fn single() -> (EffectiveHamiltonian, SpectralData, ModeWeights) {
        let arr = AtomArray::new(vec![Vector3::zeros()], 0, Dipole::circular()).unwrap();
        let h = build_hamiltonian(&arr).unwrap();
        let s = decompose(&h).unwrap();
        let w = mode_weights(&s, &localized_state(1, 0)).unwrap();
        (h, s, w)
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.1, 0.2]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.2, 0.2]).is_err());
        let g = TimeGrid::default();
        assert_eq!(g.len(), 3001);
        assert_eq!(g.end(), 30.0);
        assert!((g.times()[1] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn single_atom_decays_exponentially() {
        let (h, s, w) = single();
        let grid = TimeGrid::default();
        let tr = survival_modesum(&s, &w, &grid);
        for (t, p) in tr.times.iter().zip(&tr.p_e) {
            assert!((p - (-t).exp()).abs() < 1e-14);
        }
        let ode = survival_ode(&h, &localized_state(1, 0), &grid, Stepping::Auto).unwrap();
        assert!((ode.final_value() - (-30.0f64).exp()).abs() < 1e-8);
        assert!(ode.max_abs_difference(&tr) < 1e-8);
        // time average of e^{-t} over [0, 30]
        assert!((tr.p_bar - (1.0 - (-30.0f64).exp()) / 30.0).abs() < 1e-5);
    }

    #[test]
    fn fixed_step_above_bound_is_rejected() {
        let (h, _, _) = single();
        let grid = TimeGrid::uniform(1.0, 11).unwrap();
        let err = survival_ode(&h, &localized_state(1, 0), &grid, Stepping::Fixed(1)).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
        assert!(survival_ode(&h, &localized_state(1, 0), &grid, Stepping::Fixed(10)).is_ok());
    }

    fn synthetic(kappas: [Complex64; 2]) -> SpectralData {
        let m = DMatrix::from_fn(2, 2, |i, j| if i == j { kappas[i] } else { Complex64::new(0.0, 0.0) });
        decompose_matrix(&m, 1.0).unwrap()
    }

    #[test]
    fn two_mode_formula_is_exact_for_two_modes() {
        let s = synthetic([Complex64::new(1.0, -0.025), Complex64::new(2.0, -0.025)]);
        let psi = DVector::from_element(2, Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
        let w = mode_weights(&s, &psi).unwrap();
        let m = two_mode_analysis(&s, &w).unwrap();
        assert!((m.delta12.abs() - 1.0).abs() < 1e-15);
        assert!((m.period - TAU).abs() < 1e-12);
        let grid = TimeGrid::uniform(20.0, 401).unwrap();
        let tr = survival_modesum(&s, &w, &grid);
        for (t, p) in tr.times.iter().zip(&tr.p_e) {
            assert!((m.evaluate(*t) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn undamped_equal_weights_oscillate_fully() {
        let s = synthetic([Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)]);
        let psi = DVector::from_element(2, Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
        let w = mode_weights(&s, &psi).unwrap();
        let m = two_mode_analysis(&s, &w).unwrap();
        assert!((2.0 * m.amplitudes.0 * m.amplitudes.1 - 0.5).abs() < 1e-15);
        let grid = TimeGrid::uniform(TAU, 2001).unwrap();
        let tr = survival_modesum(&s, &w, &grid);
        let max = tr.p_e.iter().cloned().fold(f64::MIN, f64::max);
        let min = tr.p_e.iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - 1.0).abs() < 1e-12 && min.abs() < 1e-5);
    }

    #[test]
    fn degenerate_split_is_reported() {
        let s = synthetic([Complex64::new(1.0, -0.1), Complex64::new(1.0, -0.2)]);
        let psi = DVector::from_element(2, Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
        let w = mode_weights(&s, &psi).unwrap();
        assert!(matches!(two_mode_analysis(&s, &w), Err(Error::DegenerateSplit(_))));
    }

    #[test]
    fn local_maxima() {
        assert_eq!(count_local_maxima(&[0.0, 1.0, 0.0, 2.0, 2.0, 1.0, 3.0]), 2);
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.05).sin()).collect();
        assert_eq!(count_local_maxima(&xs), 8);
    }

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let x = [0.0, 0.5, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|t| 2.0 * t + 1.0).collect();
        assert!((trapezoid(&x, &y) - 12.0).abs() < 1e-14);
    }

    #[test]
    fn csv_rows() {
        let (_, s, w) = single();
        let grid = TimeGrid::uniform(1.0, 3).unwrap();
        let tr = survival_modesum(&s, &w, &grid);
        assert_eq!(tr.to_csv().lines().count(), 4);
        assert!(tr.to_csv().starts_with("t,p_e\n0,1\n"));
        assert_eq!(comparison_csv(&tr, &tr).lines().count(), 4);
    }
}
