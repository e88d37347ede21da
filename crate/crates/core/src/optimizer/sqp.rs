//! Feasible sequential quadratic programming with damped BFGS.
//!
//! Each iteration solves
//!
//!   min_d ½ dᵀBd + gᵀd   s.t.   c(x) + ∇c(x)ᵀd ≥ 0,   |d_i| ≤ Δ
//!
//! and backtracks on the objective. The caller guarantees that every
//! constraint is convex, so the linearization underestimates c and any
//! QP-feasible step (or fraction of it) keeps the iterate feasible.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::qp::solve_qp;

pub trait NlpProblem {
    fn dim(&self) -> usize;
    /// Objective value, +∞ where it cannot be evaluated.
    fn objective(&self, x: &DVector<f64>) -> f64;
    /// Constraint indices that can become active within a step of at most
    /// `max_step` per coordinate.
    fn constraint_set(&self, x: &DVector<f64>, max_step: f64) -> Vec<usize>;
    /// Values (≥ 0 when satisfied) and Jacobian rows of the listed constraints.
    fn constraints(&self, x: &DVector<f64>, set: &[usize]) -> (DVector<f64>, DMatrix<f64>);
    fn is_feasible(&self, x: &DVector<f64>) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqpSettings {
    pub max_iterations: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub fd_step: f64,
    pub max_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// QP step below `xtol`: first-order stationary point.
    Stationary,
    /// Objective change below `ftol` on consecutive iterations.
    ObjectiveTolerance,
    MaxIterations,
    /// No decrease along the QP direction, even with B reset.
    LineSearchFailed,
    QpFailed,
    GradientFailed,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Termination::Stationary | Termination::ObjectiveTolerance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqpOutcome {
    pub x: DVector<f64>,
    pub f: f64,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

struct Counter<'a, P: NlpProblem> {
    problem: &'a P,
    evaluations: usize,
}

impl<P: NlpProblem> Counter<'_, P> {
    fn f(&mut self, x: &DVector<f64>) -> f64 {
        self.evaluations += 1;
        self.problem.objective(x)
    }

    /// Central differences, one-sided where one neighbour cannot be evaluated.
    fn gradient(&mut self, x: &DVector<f64>, f0: f64, h: f64) -> Option<DVector<f64>> {
        let n = x.len();
        let mut g = DVector::zeros(n);
        let mut probe = x.clone();
        for i in 0..n {
            probe[i] = x[i] + h;
            let fp = self.f(&probe);
            probe[i] = x[i] - h;
            let fm = self.f(&probe);
            probe[i] = x[i];
            g[i] = match (fp.is_finite(), fm.is_finite()) {
                (true, true) => (fp - fm) / (2.0 * h),
                (true, false) => (fp - f0) / h,
                (false, true) => (f0 - fm) / h,
                (false, false) => return None,
            };
        }
        Some(g)
    }
}

fn bfgs_update(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) {
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if !(sbs > 0.0) {
        return;
    }
    let sy = s.dot(y);
    // Powell damping keeps B positive definite
    let y = if sy < 0.2 * sbs {
        let theta = 0.8 * sbs / (sbs - sy);
        y * theta + &bs * (1.0 - theta)
    } else {
        y.clone()
    };
    let sy = s.dot(&y);
    if !(sy > 0.0) || !sy.is_finite() {
        return;
    }
    *b += &y * y.transpose() / sy - &bs * bs.transpose() / sbs;
}

pub fn minimize<P: NlpProblem>(problem: &P, x0: DVector<f64>, settings: &SqpSettings) -> SqpOutcome {
    let n = problem.dim();
    let mut ev = Counter { problem, evaluations: 0 };
    let mut x = x0;
    let mut f = ev.f(&x);
    let mut trace = vec![f];
    let finish = |x, f, trace, iterations, ev: &Counter<P>, termination| SqpOutcome {
        x,
        f,
        trace,
        iterations,
        evaluations: ev.evaluations,
        termination,
    };
    let Some(mut g) = ev.gradient(&x, f, settings.fd_step) else {
        return finish(x, f, trace, 0, &ev, Termination::GradientFailed);
    };
    let mut b = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut small_changes = 0;
    let delta = settings.max_step;

    let mut iterations = 0;
    while iterations < settings.max_iterations {
        iterations += 1;
        let set = problem.constraint_set(&x, delta);
        let (cv, jac) = problem.constraints(&x, &set);
        let m = set.len();
        // columns: linearized constraints, then d_i ≥ −Δ and −d_i ≥ −Δ
        let mut cmat = DMatrix::<f64>::zeros(n, m + 2 * n);
        let mut bvec = DVector::<f64>::zeros(m + 2 * n);
        for k in 0..m {
            cmat.set_column(k, &jac.row(k).transpose());
            bvec[k] = -cv[k];
        }
        for i in 0..n {
            cmat[(i, m + i)] = 1.0;
            cmat[(i, m + n + i)] = -1.0;
            bvec[m + i] = -delta;
            bvec[m + n + i] = -delta;
        }
        let sol = match solve_qp(&b, &g, &cmat, &bvec) {
            Ok(sol) => sol,
            Err(_) if !fresh => {
                b = DMatrix::identity(n, n);
                fresh = true;
                continue;
            }
            Err(_) => return finish(x, f, trace, iterations, &ev, Termination::QpFailed),
        };
        let d = sol.x;
        if d.amax() <= settings.xtol {
            return finish(x, f, trace, iterations, &ev, Termination::Stationary);
        }
        let slope = g.dot(&d);

        let mut alpha = 1.0;
        let mut accepted = None;
        if slope < 0.0 {
            while alpha >= 1e-10 {
                let xt = &x + &d * alpha;
                if problem.is_feasible(&xt) {
                    let ft = ev.f(&xt);
                    if ft.is_finite() && ft <= f + 1e-4 * alpha * slope {
                        accepted = Some((xt, ft));
                        break;
                    }
                }
                alpha *= 0.5;
            }
        }
        let Some((xt, ft)) = accepted else {
            if !fresh {
                b = DMatrix::identity(n, n);
                fresh = true;
                continue;
            }
            return finish(x, f, trace, iterations, &ev, Termination::LineSearchFailed);
        };
        let Some(gt) = ev.gradient(&xt, ft, settings.fd_step) else {
            trace.push(ft);
            return finish(xt, ft, trace, iterations, &ev, Termination::GradientFailed);
        };

        let lambda = sol.multipliers.rows(0, m).into_owned();
        let (_, jac_t) = problem.constraints(&xt, &set);
        let s = &xt - &x;
        let y = (&gt - jac_t.transpose() * &lambda) - (&g - jac.transpose() * &lambda);
        if fresh {
            let sy = s.dot(&y);
            if sy > 0.0 {
                b = DMatrix::identity(n, n) * (y.dot(&y) / sy);
            }
            fresh = false;
        }
        bfgs_update(&mut b, &s, &y);

        let change = (f - ft).abs();
        x = xt;
        f = ft;
        g = gt;
        trace.push(f);
        if change <= settings.ftol * (1.0 + f.abs()) {
            small_changes += 1;
            if small_changes >= 2 {
                return finish(x, f, trace, iterations, &ev, Termination::ObjectiveTolerance);
            }
        } else {
            small_changes = 0;
        }
    }
    finish(x, f, trace, iterations, &ev, Termination::MaxIterations)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> SqpSettings {
        SqpSettings {
            max_iterations: 200,
            ftol: 1e-12,
            xtol: 1e-10,
            fd_step: 1e-6,
            max_step: 0.5,
        }
    }

    /// Rosenbrock outside the disc |x − (1, 1)| ≥ 0.5, from a feasible start.
    struct Rosen;

    impl NlpProblem for Rosen {
        fn dim(&self) -> usize {
            2
        }
        fn objective(&self, x: &DVector<f64>) -> f64 {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        }
        fn constraint_set(&self, _: &DVector<f64>, _: f64) -> Vec<usize> {
            vec![0]
        }
        fn constraints(&self, x: &DVector<f64>, _: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
            let dx = x[0] - 1.0;
            let dy = x[1] - 1.0;
            (
                DVector::from_element(1, dx * dx + dy * dy - 0.25),
                DMatrix::from_row_slice(1, 2, &[2.0 * dx, 2.0 * dy]),
            )
        }
        fn is_feasible(&self, x: &DVector<f64>) -> bool {
            self.constraints(x, &[0]).0[0] >= -1e-12
        }
    }

    struct Bowl;

    impl NlpProblem for Bowl {
        fn dim(&self) -> usize {
            3
        }
        fn objective(&self, x: &DVector<f64>) -> f64 {
            (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2) + 0.5 * x[2].powi(2)
        }
        fn constraint_set(&self, _: &DVector<f64>, _: f64) -> Vec<usize> {
            vec![]
        }
        fn constraints(&self, _: &DVector<f64>, _: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
            (DVector::zeros(0), DMatrix::zeros(0, 3))
        }
        fn is_feasible(&self, _: &DVector<f64>) -> bool {
            true
        }
    }

    #[test]
    fn unconstrained_quadratic() {
        let out = minimize(&Bowl, DVector::from_vec(vec![3.0, 2.0, -1.0]), &settings());
        assert!(out.termination.converged());
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] + 0.5).abs() < 1e-6 && out.x[2].abs() < 1e-6);
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn constrained_rosenbrock_stays_feasible() {
        let out = minimize(&Rosen, DVector::from_vec(vec![-1.0, 1.5]), &settings());
        assert!(Rosen.is_feasible(&out.x));
        // minimizer lies on the circle
        let c = Rosen.constraints(&out.x, &[0]).0[0];
        assert!(c.abs() < 1e-6, "c = {c}");
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.termination.converged());
        // no better point on the nearby arc
        let t0 = (out.x[1] - 1.0).atan2(out.x[0] - 1.0);
        let best = (-2000..=2000)
            .map(|i| {
                let t = t0 + i as f64 * 1e-4;
                Rosen.objective(&DVector::from_vec(vec![1.0 + 0.5 * t.cos(), 1.0 + 0.5 * t.sin()]))
            })
            .fold(f64::INFINITY, f64::min);
        assert!(out.f <= best + 1e-6, "{} vs {}", out.f, best);
    }

    #[test]
    fn damped_update_keeps_positive_definite() {
        let mut b = DMatrix::<f64>::identity(2, 2);
        let s = DVector::from_vec(vec![1.0, 0.0]);
        let y = DVector::from_vec(vec![-1.0, 0.5]);
        bfgs_update(&mut b, &s, &y);
        assert!(b.clone().cholesky().is_some());
    }
}
