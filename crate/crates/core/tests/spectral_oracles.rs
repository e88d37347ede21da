use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use retention::rng::{seeded, SeededRng};
use retention::spectral::{decompose_matrix, mode_weights, residuals_matrix};

fn random_complex_symmetric(n: usize, rng: &mut SeededRng) -> DMatrix<Complex64> {
    let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        for j in i..n {
            let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            m[(i, j)] = z;
            m[(j, i)] = z;
        }
    }
    m
}

fn random_unit_state(n: usize, rng: &mut SeededRng) -> DVector<Complex64> {
    let v = DVector::from_fn(n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let norm = v.norm();
    v.map(|z| z / norm)
}

#[test]
fn random_complex_symmetric_reconstruction() {
    let mut rng = seeded(42);
    for n in [8, 12] {
        for _ in 0..10 {
            let m = random_complex_symmetric(n, &mut rng);
            let s = decompose_matrix(&m, 1.0).unwrap();
            let scale = m.norm();
            assert!((s.reconstruct() - &m).norm() / scale < 1e-12);
            assert!(s.completeness_error() < 1e-10);
            for r in residuals_matrix(&m, &s) {
                assert!(r.right < 1e-12 && r.left < 1e-12);
            }
            for _ in 0..50 {
                let psi = random_unit_state(n, &mut rng);
                let w = mode_weights(&s, &psi).unwrap();
                assert!((w.sum() - 1.0).norm() < 1e-10);
            }
        }
    }
}

#[test]
fn general_matrix_uses_dual_basis() {
    let mut rng = seeded(8);
    let n = 8;
    let m = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let s = decompose_matrix(&m, 1.0).unwrap();
    assert!((s.reconstruct() - &m).norm() / m.norm() < 1e-12);
    for r in residuals_matrix(&m, &s) {
        assert!(r.right < 1e-12 && r.left < 1e-12);
    }
}

#[test]
fn residual_detects_perturbed_eigenvector() {
    let mut rng = seeded(3);
    let m = random_complex_symmetric(8, &mut rng);
    let mut s = decompose_matrix(&m, 1.0).unwrap();
    let before = residuals_matrix(&m, &s)[0].right;
    // push mode 0 off its eigenvector by 1e-3 in a fixed direction
    let shift = random_unit_state(8, &mut rng);
    let mut v = s.right.column(0).into_owned() + shift * Complex64::new(1e-3, 0.0);
    let norm = v.norm();
    v.iter_mut().for_each(|z| *z /= norm);
    s.right.set_column(0, &v);
    let after = residuals_matrix(&m, &s)[0].right;
    assert!(before < 1e-13);
    assert!(after > 1e-5 && after < 1e-2, "residual {after}");
}
