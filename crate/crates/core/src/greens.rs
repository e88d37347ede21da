//! Free-space dyadic Green's tensor.
//!
//! G0(r, ω) = e^{ikr}/(4πr) [(1 + i/kr − 1/(kr)²) I + (−1 − 3i/kr + 3/(kr)²) r̂r̂]
//! with k = ω (c = 1). The imaginary part is evaluated through spherical
//! Bessel functions,
//!
//! Im G0 = k/(4π) [(j0(x) − j1(x)/x) I + j2(x) r̂r̂],   x = kr,
//!
//! which stays accurate as r → 0 where the closed form cancels.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex symmetric 3×3 Green's tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenTensor(pub Matrix3<Complex64>);

impl GreenTensor {
    pub fn re(&self) -> Matrix3<f64> {
        self.0.map(|z| z.re)
    }

    pub fn im(&self) -> Matrix3<f64> {
        self.0.map(|z| z.im)
    }

    pub fn value(&self) -> &Matrix3<Complex64> {
        &self.0
    }
}

/// (j0(x), j1(x)/x, j2(x)).
fn spherical_bessel_012(x: f64) -> (f64, f64, f64) {
    if x < 0.5 {
        bessel_series(x)
    } else {
        bessel_trig(x)
    }
}

fn bessel_series(x: f64) -> (f64, f64, f64) {
    // j_n(x) = x^n Σ_k (−x²/2)^k / (k! (2n+2k+1)!!)
    let h = -0.5 * x * x;
    let mut j0 = 0.0;
    let mut j1x = 0.0;
    let mut j2 = 0.0;
    let mut term = 1.0; // h^k / k!
    let (mut df0, mut df1, mut df2) = (1.0, 3.0, 15.0); // (2n+2k+1)!!
    for k in 0..14 {
        j0 += term / df0;
        j1x += term / df1;
        j2 += term / df2;
        let kf = k as f64;
        term *= h / (kf + 1.0);
        df0 *= 2.0 * kf + 3.0;
        df1 *= 2.0 * kf + 5.0;
        df2 *= 2.0 * kf + 7.0;
    }
    (j0, j1x, j2 * x * x)
}

fn bessel_trig(x: f64) -> (f64, f64, f64) {
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    let j1 = s / (x * x) - c / x;
    let j2 = (3.0 / (x * x) - 1.0) * s / x - 3.0 * c / (x * x);
    (j0, j1 / x, j2)
}

/// Im G0 in the limit r → 0: (ω/6π) I.
pub fn im_green_at_origin(omega0: f64) -> Matrix3<f64> {
    Matrix3::identity() * (omega0 / (6.0 * PI))
}

/// Free-space Green's tensor at displacement `r` for angular frequency `omega0`.
pub fn green_tensor(r: &Vector3<f64>, omega0: f64) -> Result<GreenTensor> {
    let dist = r.norm();
    if !(dist > 0.0) || !dist.is_finite() {
        return Err(Error::InvalidInput(format!("separation must be positive and finite, got {dist}")));
    }
    let k = omega0;
    let x = k * dist;
    let rhat = r / dist;
    let rr = rhat * rhat.transpose();
    let eye = Matrix3::<f64>::identity();

    // Re part: Re[e^{ix}(1 + i/x − 1/x²)] and Re[e^{ix}(−1 − 3i/x + 3/x²)]
    let (s, c) = x.sin_cos();
    let x2 = x * x;
    let re_a = c - s / x - c / x2;
    let re_b = -c + 3.0 * s / x + 3.0 * c / x2;
    let pref = 1.0 / (4.0 * PI * dist);
    let re = (eye * re_a + rr * re_b) * pref;

    let (j0, j1x, j2) = spherical_bessel_012(x);
    let im = (eye * (j0 - j1x) + rr * j2) * (k / (4.0 * PI));

    Ok(GreenTensor(Matrix3::from_fn(|i, j| Complex64::new(re[(i, j)], im[(i, j)]))))
}

/// Transverse projector I − r̂r̂ for a unit direction.
pub fn far_field_projector(rhat: &Vector3<f64>) -> Result<Matrix3<f64>> {
    if (rhat.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("direction must be a unit vector (|r| = {})", rhat.norm())));
    }
    Ok(Matrix3::identity() - rhat * rhat.transpose())
}

/// d̂*·M·d̂ for a complex matrix.
pub fn sandwich(d: &Vector3<Complex64>, m: &Matrix3<Complex64>) -> Complex64 {
    let md = m * d;
    d.iter().zip(md.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// d̂*·M·d̂ for a real matrix.
pub fn sandwich_real(d: &Vector3<Complex64>, m: &Matrix3<f64>) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            acc += d[i].conj() * m[(i, j)] * d[j];
        }
    }
    acc
}
