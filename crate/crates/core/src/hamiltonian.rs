//! Effective non-Hermitian Hamiltonian of the single-excitation manifold.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::AtomArray;
use crate::greens::{green_tensor, sandwich_real};

/// H = J − (i/2)Γ with real symmetric J (cooperative Lamb shifts) and Γ
/// (cooperative decay rates).
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveHamiltonian {
    pub j: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub h: DMatrix<Complex64>,
    pub gamma0: f64,
}

impl EffectiveHamiltonian {
    pub fn from_parts(j: DMatrix<f64>, gamma: DMatrix<f64>, gamma0: f64) -> Result<Self> {
        if !j.is_square() || j.shape() != gamma.shape() {
            return Err(Error::InvalidInput("J and Gamma must be square and of equal size".into()));
        }
        let h = DMatrix::from_fn(j.nrows(), j.ncols(), |a, b| Complex64::new(j[(a, b)], -0.5 * gamma[(a, b)]));
        Ok(Self { j, gamma, h, gamma0 })
    }

    pub fn n_atoms(&self) -> usize {
        self.h.nrows()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Row-major CSV dump: `row,col,re,im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,re,im\n");
        for a in 0..self.h.nrows() {
            for b in 0..self.h.ncols() {
                let z = self.h[(a, b)];
                let _ = writeln!(out, "{a},{b},{},{}", z.re, z.im);
            }
        }
        out
    }

    /// Row-major `[[re, im], ...]` rows.
    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Dump {
            n: usize,
            gamma0: f64,
            h: Vec<Vec<[f64; 2]>>,
        }
        let h = (0..self.h.nrows())
            .map(|a| (0..self.h.ncols()).map(|b| [self.h[(a, b)].re, self.h[(a, b)].im]).collect())
            .collect();
        serde_json::to_value(Dump {
            n: self.n_atoms(),
            gamma0: self.gamma0,
            h,
        })
        .expect("serializable")
    }
}

/// Assembles J and Γ from the free-space Green's tensor.
///
/// Off-diagonal couplings are J = −(3πγ0/ω0) d̂*·Re G0·d̂ and
/// Γ = (6πγ0/ω0) d̂*·Im G0·d̂. The diagonal is regularized to J_jj = 0,
/// Γ_jj = γ0.
pub fn build_hamiltonian(array: &AtomArray) -> Result<EffectiveHamiltonian> {
    let n = array.len();
    let gamma0 = array.gamma0();
    let omega0 = array.omega0();
    let d = array.dipole().vector();
    let pos = array.positions();
    let j_scale = -3.0 * PI * gamma0 / omega0;
    let g_scale = 6.0 * PI * gamma0 / omega0;

    let mut j = DMatrix::<f64>::zeros(n, n);
    let mut gamma = DMatrix::<f64>::zeros(n, n);
    for a in 0..n {
        gamma[(a, a)] = gamma0;
        for b in a + 1..n {
            let r = pos[a] - pos[b];
            if r.norm() == 0.0 {
                return Err(Error::CoincidentAtoms(a, b));
            }
            let g = green_tensor(&r, omega0)?;
            let jab = j_scale * sandwich_real(d, &g.re()).re;
            let gab = g_scale * sandwich_real(d, &g.im()).re;
            j[(a, b)] = jab;
            j[(b, a)] = jab;
            gamma[(a, b)] = gab;
            gamma[(b, a)] = gab;
        }
    }
    EffectiveHamiltonian::from_parts(j, gamma, gamma0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Dipole, GeometryKind, GeometrySpec};
    use crate::greens::green_tensor;
    use nalgebra::Vector3;
    use std::f64::consts::TAU;

    fn pair(dist: f64, d: Dipole) -> AtomArray {
        AtomArray::new(vec![Vector3::zeros(), Vector3::new(dist, 0.0, 0.0)], 0, d).unwrap()
    }

    #[test]
    fn single_atom() {
        let arr = AtomArray::new(vec![Vector3::zeros()], 0, Dipole::circular()).unwrap();
        let h = build_hamiltonian(&arr).unwrap();
        assert_eq!(h.n_atoms(), 1);
        assert_eq!(h.h[(0, 0)], Complex64::new(0.0, -0.5));
    }

    #[test]
    fn far_apart_couplings_vanish() {
        for d in [Dipole::circular(), Dipole::z()] {
            let h = build_hamiltonian(&pair(100.0, d)).unwrap();
            assert!(h.j[(0, 1)].abs() < 1e-2);
            assert!(h.gamma[(0, 1)].abs() < 1e-2);
        }
    }

    #[test]
    fn close_pair_decay_tends_to_gamma0() {
        for d in [Dipole::circular(), Dipole::z()] {
            let h = build_hamiltonian(&pair(1e-4, d)).unwrap();
            assert!((h.gamma[(0, 1)] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn structural_invariants() {
        let arr = GeometrySpec::new(GeometryKind::Sunflower, 4, 0.2, Dipole::circular())
            .build()
            .unwrap();
        let h = build_hamiltonian(&arr).unwrap();
        let n = h.n_atoms();
        for a in 0..n {
            assert_eq!(h.j[(a, a)], 0.0);
            assert_eq!(h.gamma[(a, a)], 1.0);
        }
        assert!((&h.j - h.j.transpose()).norm() <= 1e-12 * h.j.norm());
        assert!((&h.gamma - h.gamma.transpose()).norm() <= 1e-12 * h.gamma.norm());
        let diff: f64 = (&h.h - h.h.transpose()).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(diff <= 1e-12 * h.frobenius_norm());
        let eig = h.gamma.clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l > -1e-10));
    }

    #[test]
    fn sandwiches_are_real() {
        let d = Dipole::circular();
        let g = green_tensor(&Vector3::new(0.13, -0.21, 0.04), TAU).unwrap();
        assert!(sandwich_real(d.vector(), &g.re()).im.abs() < 1e-14);
        assert!(sandwich_real(d.vector(), &g.im()).im.abs() < 1e-14);
    }

    #[test]
    fn gamma0_scaling_covariance() {
        let arr = GeometrySpec::new(GeometryKind::Ring, 6, 0.3, Dipole::circular()).build().unwrap();
        let h1 = build_hamiltonian(&arr).unwrap();
        let h3 = build_hamiltonian(&arr.with_gamma0(3.0).unwrap()).unwrap();
        for (a, b) in h1.h.iter().zip(h3.h.iter()) {
            assert!((a * 3.0 - b).norm() <= 1e-14 * b.norm().max(1.0));
        }
    }

    #[test]
    fn coincident_atoms_rejected() {
        let j = DMatrix::zeros(2, 3);
        assert!(EffectiveHamiltonian::from_parts(j, DMatrix::zeros(2, 3), 1.0).is_err());
    }

    #[test]
    fn csv_dump_shape() {
        let h = build_hamiltonian(&pair(0.2, Dipole::z())).unwrap();
        let csv = h.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("row,col,re,im\n0,0,0,-0.5\n"));
        let v = h.to_json();
        assert_eq!(v["n"], 2);
    }
}
