//! Dense strictly convex quadratic programs,
//!
//!   minimize ½ xᵀGx + aᵀx   subject to   c_jᵀx ≥ b_j,
//!
//! solved with the Goldfarb-Idnani dual active-set method. The active-set
//! projections are rebuilt from G⁻¹ at every change, which is cheap for the
//! problem sizes met here (tens of variables).

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpError {
    NotPositiveDefinite,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per constraint (zero for inactive ones).
    pub multipliers: DVector<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
}

struct ActiveProjection {
    w: DMatrix<f64>,
    s_chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl ActiveProjection {
    fn new(ginv: &DMatrix<f64>, c: &DMatrix<f64>, active: &[usize]) -> Option<Self> {
        if active.is_empty() {
            return Some(Self {
                w: DMatrix::zeros(ginv.nrows(), 0),
                s_chol: None,
            });
        }
        let n_mat = DMatrix::from_fn(c.nrows(), active.len(), |i, k| c[(i, active[k])]);
        let w = ginv * &n_mat;
        let s = n_mat.transpose() * &w;
        let s_chol = s.cholesky()?;
        Some(Self { w, s_chol: Some(s_chol) })
    }

    /// Primal direction z = H n and dual direction r = N* n.
    fn directions(&self, ginv: &DMatrix<f64>, np: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let base = ginv * np;
        match &self.s_chol {
            None => (base, DVector::zeros(0)),
            Some(ch) => {
                let r = ch.solve(&(self.w.transpose() * np));
                let z = base - &self.w * &r;
                (z, r)
            }
        }
    }
}

pub fn solve_qp(g: &DMatrix<f64>, a: &DVector<f64>, c: &DMatrix<f64>, b: &DVector<f64>) -> Result<QpSolution, QpError> {
    let n = g.nrows();
    let m = c.ncols();
    assert_eq!(c.nrows(), n);
    assert_eq!(b.len(), m);
    let ginv = g.clone().cholesky().ok_or(QpError::NotPositiveDefinite)?.inverse();

    let mut x = -(&ginv * a);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let col_norm: Vec<f64> = (0..m).map(|j| c.column(j).norm()).collect();
    let max_iter = 20 * (n + m) + 100;
    let mut iterations = 0;

    loop {
        // most violated constraint, scaled by its normal
        let mut pick: Option<(usize, f64)> = None;
        for j in 0..m {
            if active.contains(&j) || col_norm[j] == 0.0 {
                continue;
            }
            let s = c.column(j).dot(&x) - b[j];
            let tol = 1e-12 * (1.0 + b[j].abs() + col_norm[j] * x.norm());
            if s < -tol {
                let scaled = s / col_norm[j];
                if pick.is_none_or(|(_, best)| scaled < best) {
                    pick = Some((j, scaled));
                }
            }
        }
        let Some((p, _)) = pick else {
            let mut multipliers = DVector::zeros(m);
            for (k, &j) in active.iter().enumerate() {
                multipliers[j] = u[k];
            }
            return Ok(QpSolution {
                x,
                multipliers,
                active,
                iterations,
            });
        };
        let np: DVector<f64> = c.column(p).into_owned();
        let mut u_plus = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::IterationLimit);
            }
            let proj = ActiveProjection::new(&ginv, c, &active).ok_or(QpError::NotPositiveDefinite)?;
            let (z, r) = proj.directions(&ginv, &np);
            let reference = (&ginv * &np).norm();

            let mut t1 = f64::INFINITY;
            let mut drop: Option<usize> = None;
            for k in 0..active.len() {
                if r[k] > 1e-14 * (1.0 + r.amax()) {
                    let ratio = u[k] / r[k];
                    if ratio < t1 {
                        t1 = ratio;
                        drop = Some(k);
                    }
                }
            }
            let z_zero = z.norm() <= 1e-12 * reference.max(f64::MIN_POSITIVE);
            let t2 = if z_zero {
                f64::INFINITY
            } else {
                let sp = np.dot(&x) - b[p];
                (-sp / z.dot(&np)).max(0.0)
            };
            let t = t1.min(t2);
            if t.is_infinite() {
                return Err(QpError::Infeasible);
            }
            for k in 0..active.len() {
                u[k] -= t * r[k];
            }
            u_plus += t;
            if !z_zero {
                x += &z * t;
            }
            if !z_zero && t2 <= t1 {
                active.push(p);
                u.push(u_plus);
                break;
            }
            let k = drop.expect("partial step has a blocking constraint");
            active.remove(k);
            u.remove(k);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_minimum() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let a = DVector::from_vec(vec![-2.0, -4.0]);
        let c = DMatrix::zeros(2, 0);
        let sol = solve_qp(&g, &a, &c, &DVector::zeros(0)).unwrap();
        assert!((sol.x - DVector::from_vec(vec![1.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn textbook_problem() {
        // (x1 − 1)² + (x2 − 2.5)² under five linear constraints; optimum (1.4, 1.7)
        let g = DMatrix::identity(2, 2) * 2.0;
        let a = DVector::from_vec(vec![-2.0, -5.0]);
        let c = DMatrix::from_column_slice(2, 5, &[1.0, -2.0, -1.0, -2.0, -1.0, 2.0, 1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![-2.0, -6.0, -2.0, 0.0, 0.0]);
        let sol = solve_qp(&g, &a, &c, &b).unwrap();
        assert!((sol.x[0] - 1.4).abs() < 1e-12 && (sol.x[1] - 1.7).abs() < 1e-12);
        assert_eq!(sol.active, vec![0]);
        assert!((sol.multipliers[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasibility() {
        let g = DMatrix::identity(1, 1);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let b = DVector::from_vec(vec![1.0, 0.0]); // x ≥ 1 and x ≤ 0
        assert_eq!(solve_qp(&g, &DVector::zeros(1), &c, &b).unwrap_err(), QpError::Infeasible);
    }

    #[test]
    fn kkt_conditions_on_random_problems() {
        use rand::Rng;
        let mut rng = crate::rng::seeded(3);
        for _ in 0..50 {
            let n = 6;
            let m = 9;
            let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let g = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
            let a = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let c = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            // x = 0 is feasible
            let b = DVector::from_fn(m, |_, _| rng.random_range(-1.0..0.0));
            let sol = solve_qp(&g, &a, &c, &b).unwrap();
            let slack = c.transpose() * &sol.x - &b;
            assert!(slack.iter().all(|&s| s > -1e-10));
            assert!(sol.multipliers.iter().all(|&u| u >= -1e-12));
            let stationarity = &g * &sol.x + &a - &c * &sol.multipliers;
            assert!(stationarity.norm() < 1e-9);
            for j in 0..m {
                assert!((sol.multipliers[j] * slack[j]).abs() < 1e-10);
            }
        }
    }
}
