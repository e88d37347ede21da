//! Far-field radiation patterns of eigenmodes.
//!
//! The dimensionless intensity of an excitation amplitude vector c in
//! direction r̂ is
//!
//! Ī(r̂) = |Σ_j (I − r̂r̂) d̂ c_j e^{−ik0 r̂·r_j}|²
//!
//! and P̄ = ∮ Ī dΩ. For a unit-norm right eigenvector, Γ_ℓ/γ0 = (3/8π) P̄_ℓ.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use nalgebra::{DVector, Matrix3, Vector3};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::AtomArray;
use crate::greens::far_field_projector;
use crate::spectral::SpectralData;

/// Quadrature order used when none is given.
pub const DEFAULT_ORDER: usize = 64;
/// Below this Γ/γ0 the pattern check reports absolute error.
pub const ABSOLUTE_ERROR_BELOW: f64 = 1e-8;

/// Gauss-Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Direction {
    pub theta: f64,
    pub phi: f64,
    pub weight: f64,
    pub rhat: Vector3<f64>,
}

/// Gauss-Legendre in cos θ (`order` points) × trapezoid in φ (`2·order` points).
#[derive(Debug, Clone, PartialEq)]
pub struct SphereQuadrature {
    pub order: usize,
    pub directions: Vec<Direction>,
}

impl SphereQuadrature {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidInput("quadrature order must be positive".into()));
        }
        let (xs, ws) = gauss_legendre(order);
        let n_phi = 2 * order;
        let dphi = TAU / n_phi as f64;
        let mut directions = Vec::with_capacity(order * n_phi);
        for (x, w) in xs.iter().zip(&ws) {
            let theta = x.acos();
            let sin_t = (1.0 - x * x).max(0.0).sqrt();
            for j in 0..n_phi {
                let phi = j as f64 * dphi;
                let (sp, cp) = phi.sin_cos();
                directions.push(Direction {
                    theta,
                    phi,
                    weight: w * dphi,
                    rhat: Vector3::new(sin_t * cp, sin_t * sp, *x),
                });
            }
        }
        Ok(Self { order, directions })
    }

    pub fn total_weight(&self) -> f64 {
        self.directions.iter().map(|d| d.weight).sum()
    }
}

fn check_normalized(c: &DVector<Complex64>, n: usize) -> Result<()> {
    if c.len() != n {
        return Err(Error::InvalidInput(format!("mode vector has {} entries, expected {n}", c.len())));
    }
    let norm2 = c.norm_squared();
    if (norm2 - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!("mode vector must satisfy sum |c|^2 = 1 (got {norm2})")));
    }
    Ok(())
}

fn intensity_unchecked(array: &AtomArray, c: &DVector<Complex64>, rhat: &Vector3<f64>) -> f64 {
    let k0 = array.k0();
    let proj = Matrix3::identity() - rhat * rhat.transpose();
    let pd = proj.map(|x| Complex64::new(x, 0.0)) * array.dipole().vector();
    let phase_sum: Complex64 = array
        .positions()
        .iter()
        .zip(c.iter())
        .map(|(r, cj)| cj * Complex64::new(0.0, -k0 * rhat.dot(r)).exp())
        .sum();
    pd.norm_squared() * phase_sum.norm_sqr()
}

/// Ī(r̂) for amplitudes `c` (Σ|c|² = 1).
pub fn mode_intensity(array: &AtomArray, c: &DVector<Complex64>, rhat: &Vector3<f64>) -> Result<f64> {
    check_normalized(c, array.len())?;
    far_field_projector(rhat)?;
    Ok(intensity_unchecked(array, c, rhat))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiationPattern {
    pub directions: Vec<Direction>,
    pub intensities: Vec<f64>,
    pub integrated: f64,
}

impl RadiationPattern {
    /// `theta,phi,weight,intensity` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,phi,weight,intensity\n");
        for (d, i) in self.directions.iter().zip(&self.intensities) {
            let _ = writeln!(out, "{},{},{},{}", d.theta, d.phi, d.weight, i);
        }
        out
    }
}

pub fn integrated_pattern(array: &AtomArray, c: &DVector<Complex64>, quad: &SphereQuadrature) -> Result<RadiationPattern> {
    check_normalized(c, array.len())?;
    let intensities: Vec<f64> = quad
        .directions
        .iter()
        .map(|d| intensity_unchecked(array, c, &d.rhat))
        .collect();
    let integrated = quad.directions.iter().zip(&intensities).map(|(d, i)| d.weight * i).sum();
    Ok(RadiationPattern {
        directions: quad.directions.clone(),
        intensities,
        integrated,
    })
}

/// Γ_ℓ/γ0 against (3/8π)P̄_ℓ for one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeRadiation {
    pub mode: usize,
    pub gamma_rel: f64,
    pub p_bar: f64,
    pub predicted: f64,
    /// Relative error, or absolute when `absolute` is set.
    pub error: f64,
    pub absolute: bool,
}

/// Compares each mode's decay rate with its integrated far-field pattern.
/// Right eigenvectors are renormalized to Σ|c|² = 1.
pub fn gamma_pattern_check(array: &AtomArray, s: &SpectralData, quad: &SphereQuadrature) -> Result<Vec<ModeRadiation>> {
    if s.len() != array.len() {
        return Err(Error::InvalidInput("decomposition does not match the array".into()));
    }
    (0..s.len())
        .map(|l| {
            let mut c = s.right_vec(l);
            let norm = c.norm();
            c /= Complex64::new(norm, 0.0);
            let pattern = integrated_pattern(array, &c, quad)?;
            let gamma_rel = s.relative_rate(l);
            let predicted = 3.0 / (8.0 * PI) * pattern.integrated;
            let absolute = gamma_rel < ABSOLUTE_ERROR_BELOW;
            let diff = (gamma_rel - predicted).abs();
            Ok(ModeRadiation {
                mode: l,
                gamma_rel,
                p_bar: pattern.integrated,
                predicted,
                error: if absolute { diff } else { diff / gamma_rel },
                absolute,
            })
        })
        .collect()
}

/// `mode,gamma_rel,p_bar,predicted_gamma_rel,error,absolute` rows.
pub fn summary_csv(rows: &[ModeRadiation]) -> String {
    let mut out = String::from("mode,gamma_rel,p_bar,predicted_gamma_rel,error,absolute\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.mode, r.gamma_rel, r.p_bar, r.predicted, r.error, r.absolute
        );
    }
    out
}

/// (ω0/16π²) ∮ (I − r̂r̂) e^{ik0 r̂·r} dΩ, which equals Im G0(r).
pub fn angular_spectrum_im_green(r: &Vector3<f64>, omega0: f64, quad: &SphereQuadrature) -> Matrix3<f64> {
    let k = omega0;
    let mut acc = Matrix3::<f64>::zeros();
    for d in &quad.directions {
        let proj = Matrix3::identity() - d.rhat * d.rhat.transpose();
        // the sine part integrates to zero by inversion symmetry
        acc += proj * (d.weight * (k * d.rhat.dot(r)).cos());
    }
    acc * (omega0 / (16.0 * PI * PI))
}
