//! Biorthogonal eigendecomposition of the effective Hamiltonian.
//!
//! Right eigenvectors come from a dense complex eigensolver. Because H is
//! complex symmetric, H† ψ* = (H ψ)* and the left eigenvector of mode ℓ is the
//! complex conjugate of its right eigenvector. Inside a cluster of
//! (numerically) degenerate eigenvalues the right vectors are first made
//! orthogonal under the bilinear form ψ_aᵀψ_b so that the pairing stays
//! biorthogonal. If that fails, or H is not symmetric, the left vectors are
//! taken from the dual basis (rows of R⁻¹).

use std::cmp::Ordering;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::EffectiveHamiltonian;

/// Relative tolerance used to cluster eigenvalues and pair left/right problems.
pub const PAIRING_TOLERANCE: f64 = 1e-8;
/// Floor on |⟨L|R⟩| / (‖L‖‖R‖) below which a mode is treated as defective.
pub const DEFECTIVE_THRESHOLD: f64 = 1e-12;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// How the left eigenvectors were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeftMethod {
    ComplexSymmetric,
    DualBasis,
}

/// Eigenvalues, paired right/left eigenvectors and decay rates.
///
/// Modes are sorted by ascending decay rate, ties broken by ascending
/// Re κ. Both eigenvector sets are stored as columns with unit Euclidean
/// norm; `norms[l]` holds ⟨ψ_l^L|ψ_l^R⟩.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<Complex64>,
    pub right: DMatrix<Complex64>,
    pub left: DMatrix<Complex64>,
    pub norms: Vec<Complex64>,
    pub decay_rates: Vec<f64>,
    pub gamma0: f64,
    pub left_method: LeftMethod,
}

impl SpectralData {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn right_vec(&self, l: usize) -> DVector<Complex64> {
        self.right.column(l).into_owned()
    }

    pub fn left_vec(&self, l: usize) -> DVector<Complex64> {
        self.left.column(l).into_owned()
    }

    /// Γ_l / γ0.
    pub fn relative_rate(&self, l: usize) -> f64 {
        self.decay_rates[l] / self.gamma0
    }

    /// max_{m≠l} |⟨ψ_m^L|ψ_l^R⟩| / √(|n_m||n_l|).
    pub fn biorthogonality_error(&self) -> f64 {
        let overlaps = self.left.adjoint() * &self.right;
        let n = self.len();
        let mut worst: f64 = 0.0;
        for m in 0..n {
            for l in 0..n {
                if m != l {
                    let scale = (self.norms[m].norm() * self.norms[l].norm()).sqrt();
                    worst = worst.max(overlaps[(m, l)].norm() / scale);
                }
            }
        }
        worst
    }

    /// Σ_l |ψ_l^R⟩⟨ψ_l^L| / ⟨ψ_l^L|ψ_l^R⟩.
    pub fn resolution_of_identity(&self) -> DMatrix<Complex64> {
        let n = self.len();
        let mut scaled_right = self.right.clone();
        for l in 0..n {
            let inv = Complex64::new(1.0, 0.0) / self.norms[l];
            for i in 0..n {
                scaled_right[(i, l)] *= inv;
            }
        }
        scaled_right * self.left.adjoint()
    }

    /// Largest entrywise deviation of the resolution of identity from I.
    pub fn completeness_error(&self) -> f64 {
        let r = self.resolution_of_identity();
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((r[(i, j)] - target).norm());
            }
        }
        worst
    }

    /// Σ_l κ_l |ψ_l^R⟩⟨ψ_l^L| / ⟨ψ_l^L|ψ_l^R⟩.
    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let n = self.len();
        let mut scaled = self.right.clone();
        for l in 0..n {
            let f = self.eigenvalues[l] / self.norms[l];
            for i in 0..n {
                scaled[(i, l)] *= f;
            }
        }
        scaled * self.left.adjoint()
    }
}

/// Eigenvalues and (unnormalized) right eigenvectors of a general complex matrix.
pub(crate) fn eig(m: &DMatrix<Complex64>) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    let n = m.nrows();
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigenSolver("matrix has non-finite entries".into()));
    }
    let a = faer::Mat::<Complex64>::from_fn(n, n, |i, j| m[(i, j)]);
    let e = a.eigen().map_err(|e| Error::EigenSolver(format!("{e:?}")))?;
    let s = e.S();
    let u = e.U();
    let values = (0..n).map(|k| s[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| u[(i, j)]);
    Ok((values, vectors))
}

fn frobenius(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn mode_order(a: (f64, f64), b: (f64, f64)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))
}

/// Groups indices whose eigenvalues lie within `tol` of each other
/// (transitively). Clusters come out in ascending index order.
fn cluster_eigenvalues(values: &[Complex64], tol: f64) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut c = i;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    for a in 0..n {
        for b in a + 1..n {
            if (values[a] - values[b]).norm() <= tol {
                let ra = find(&mut parent, a);
                let rb = find(&mut parent, b);
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

fn bilinear(a: &DMatrix<Complex64>, i: usize, b: &DMatrix<Complex64>, j: usize) -> Complex64 {
    a.column(i).iter().zip(b.column(j).iter()).map(|(x, y)| x * y).sum()
}

fn normalize_columns(m: &mut DMatrix<Complex64>) {
    for mut col in m.column_iter_mut() {
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            col.iter_mut().for_each(|z| *z /= norm);
        }
    }
}

/// Orthogonalizes each degenerate cluster under ψ_aᵀψ_b. Returns false when a
/// vector is (numerically) self-orthogonal.
fn t_orthogonalize(right: &mut DMatrix<Complex64>, clusters: &[Vec<usize>]) -> bool {
    for cluster in clusters.iter().filter(|c| c.len() > 1) {
        for (pos, &i) in cluster.iter().enumerate() {
            for &j in &cluster[..pos] {
                let num = bilinear(right, j, right, i);
                let den = bilinear(right, j, right, j);
                let c = num / den;
                let vj = right.column(j).into_owned();
                let mut vi = right.column_mut(i);
                vi.iter_mut().zip(vj.iter()).for_each(|(x, y)| *x -= c * y);
            }
            let norm2: f64 = right.column(i).iter().map(|z| z.norm_sqr()).sum();
            let tnorm = bilinear(right, i, right, i).norm();
            if !(tnorm > DEFECTIVE_THRESHOLD * norm2) {
                return false;
            }
            let norm = norm2.sqrt();
            right.column_mut(i).iter_mut().for_each(|z| *z /= norm);
        }
    }
    true
}

fn dual_basis_left(right: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let inv = right
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DefectiveMatrix { mode: 0, overlap: 0.0 })?;
    let mut left = inv.adjoint();
    normalize_columns(&mut left);
    Ok(left)
}

fn assemble(
    eigenvalues: Vec<Complex64>,
    right: DMatrix<Complex64>,
    left: DMatrix<Complex64>,
    gamma0: f64,
    left_method: LeftMethod,
) -> Result<SpectralData> {
    let n = eigenvalues.len();
    let mut norms = Vec::with_capacity(n);
    for l in 0..n {
        let overlap: Complex64 = left.column(l).iter().zip(right.column(l).iter()).map(|(a, b)| a.conj() * b).sum();
        // both columns have unit norm
        if !(overlap.norm() >= DEFECTIVE_THRESHOLD) {
            return Err(Error::DefectiveMatrix {
                mode: l,
                overlap: overlap.norm(),
            });
        }
        norms.push(overlap);
    }
    let decay_rates = eigenvalues.iter().map(|k| -2.0 * k.im).collect();
    Ok(SpectralData {
        eigenvalues,
        right,
        left,
        norms,
        decay_rates,
        gamma0,
        left_method,
    })
}

/// Decomposes H into its biorthogonal eigenmodes.
pub fn decompose(h: &EffectiveHamiltonian) -> Result<SpectralData> {
    decompose_matrix(&h.h, h.gamma0)
}

/// Decomposition of an arbitrary square complex matrix; `gamma0` only sets
/// the unit of the reported decay rates.
pub fn decompose_matrix(m: &DMatrix<Complex64>, gamma0: f64) -> Result<SpectralData> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::InvalidInput("matrix must be square and non-empty".into()));
    }
    let n = m.nrows();
    let (values, vectors) = eig(m)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| mode_order((-2.0 * values[a].im, values[a].re), (-2.0 * values[b].im, values[b].re)));
    let eigenvalues: Vec<Complex64> = order.iter().map(|&i| values[i]).collect();
    let mut right = DMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]);
    normalize_columns(&mut right);

    let norm_h = frobenius(m);
    let symmetric = frobenius(&(m - m.transpose())) <= 1e-12 * norm_h;
    if symmetric {
        let clusters = cluster_eigenvalues(&eigenvalues, PAIRING_TOLERANCE * norm_h);
        let mut candidate = right.clone();
        if t_orthogonalize(&mut candidate, &clusters) {
            let left = candidate.map(|z| z.conj());
            if let Ok(s) = assemble(eigenvalues.clone(), candidate, left, gamma0, LeftMethod::ComplexSymmetric) {
                if s.biorthogonality_error() <= 1e-10 {
                    return Ok(s);
                }
            }
        }
    }
    let left = dual_basis_left(&right)?;
    assemble(eigenvalues, right, left, gamma0, LeftMethod::DualBasis)
}

/// Normalized residuals of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeResidual {
    pub right: f64,
    pub left: f64,
}

/// ‖Hψ^R − κψ^R‖/(‖H‖_F‖ψ^R‖) and ‖H†ψ^L − κ*ψ^L‖/(‖H‖_F‖ψ^L‖) per mode.
pub fn residuals(h: &EffectiveHamiltonian, s: &SpectralData) -> Vec<ModeResidual> {
    residuals_matrix(&h.h, s)
}

pub fn residuals_matrix(m: &DMatrix<Complex64>, s: &SpectralData) -> Vec<ModeResidual> {
    let norm_h = frobenius(m);
    let hr = m * &s.right;
    let hl = m.adjoint() * &s.left;
    (0..s.len())
        .map(|l| {
            let k = s.eigenvalues[l];
            let rr: f64 = hr
                .column(l)
                .iter()
                .zip(s.right.column(l).iter())
                .map(|(a, b)| (a - k * b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let rl: f64 = hl
                .column(l)
                .iter()
                .zip(s.left.column(l).iter())
                .map(|(a, b)| (a - k.conj() * b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            ModeResidual {
                right: rr / (norm_h * s.right.column(l).norm()),
                left: rl / (norm_h * s.left.column(l).norm()),
            }
        })
        .collect()
}

/// Outcome of checking the left vectors against an independent
/// decomposition of H†.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdjointCheck {
    /// Largest |κ_l* − μ| over matched adjoint eigenvalues μ, relative to ‖H‖_F.
    pub eigenvalue_mismatch: f64,
    /// Largest distance of a left vector from the span of its matched
    /// adjoint eigenvectors (unit-norm vectors, so this lies in [0, 1]).
    pub subspace_misalignment: f64,
}

/// Cross-checks the left eigenvectors against an eigendecomposition of H†.
pub fn verify_with_adjoint(m: &DMatrix<Complex64>, s: &SpectralData) -> Result<AdjointCheck> {
    let norm_h = frobenius(m);
    let tol = PAIRING_TOLERANCE * norm_h;
    let (adj_values, mut adj_vectors) = eig(&m.adjoint())?;
    normalize_columns(&mut adj_vectors);
    let n = s.len();
    let clusters = cluster_eigenvalues(&s.eigenvalues, tol);
    let mut used = vec![false; n];
    let mut mismatch: f64 = 0.0;
    let mut misalignment: f64 = 0.0;
    for cluster in &clusters {
        let targets: Vec<Complex64> = cluster.iter().map(|&l| s.eigenvalues[l].conj()).collect();
        let matched: Vec<usize> = (0..n)
            .filter(|&k| targets.iter().any(|t| (adj_values[k] - t).norm() <= tol))
            .collect();
        if matched.len() != cluster.len() || matched.iter().any(|&k| used[k]) {
            return Err(Error::PairingFailure(format!(
                "cluster of {} modes near {:.6e} matched {} adjoint eigenvalues",
                cluster.len(),
                s.eigenvalues[cluster[0]],
                matched.len()
            )));
        }
        for &k in &matched {
            used[k] = true;
            let nearest = targets.iter().map(|t| (adj_values[k] - t).norm()).fold(f64::INFINITY, f64::min);
            mismatch = mismatch.max(nearest / norm_h);
        }
        // orthonormal basis of the matched adjoint eigenvectors
        let mut basis: Vec<DVector<Complex64>> = Vec::new();
        for &k in &matched {
            let mut v = adj_vectors.column(k).into_owned();
            for b in &basis {
                let c = b.dotc(&v);
                v -= b * c;
            }
            let norm = v.norm();
            if norm > 1e-8 {
                basis.push(v / Complex64::new(norm, 0.0));
            }
        }
        for &l in cluster {
            let mut v = s.left_vec(l);
            for b in &basis {
                let c = b.dotc(&v);
                v -= b * c;
            }
            misalignment = misalignment.max(v.norm());
        }
    }
    Ok(AdjointCheck {
        eigenvalue_mismatch: mismatch,
        subspace_misalignment: misalignment,
    })
}

/// Expansion of an initial state over the eigenmodes.
#[derive(Debug, Clone)]
pub struct ModeWeights {
    /// w_l = ⟨ψ0|ψ_l^R⟩⟨ψ_l^L|ψ0⟩ / ⟨ψ_l^L|ψ_l^R⟩.
    pub weights: Vec<Complex64>,
    pub initial_state: DVector<Complex64>,
    /// p_l = |w_l| / Σ|w|.
    pub normalized_magnitudes: Vec<f64>,
}

impl ModeWeights {
    /// Index of the mode with the largest |w_l| (first on ties).
    pub fn dominant(&self) -> usize {
        let mut best = 0;
        for (l, w) in self.weights.iter().enumerate() {
            if w.norm() > self.weights[best].norm() {
                best = l;
            }
        }
        best
    }

    pub fn sum(&self) -> Complex64 {
        self.weights.iter().sum()
    }
}

/// Unit vector localized on one atom.
pub fn localized_state(n: usize, index: usize) -> DVector<Complex64> {
    let mut v = DVector::from_element(n, ZERO);
    v[index] = Complex64::new(1.0, 0.0);
    v
}

pub fn mode_weights(s: &SpectralData, initial_state: &DVector<Complex64>) -> Result<ModeWeights> {
    if initial_state.len() != s.len() {
        return Err(Error::InvalidInput(format!(
            "initial state has {} entries, expected {}",
            initial_state.len(),
            s.len()
        )));
    }
    let norm = initial_state.norm();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("initial state must have unit norm (got {norm})")));
    }
    let proj_right = s.right.adjoint() * initial_state; // ⟨ψ_l^R|ψ0⟩
    let proj_left = s.left.adjoint() * initial_state; // ⟨ψ_l^L|ψ0⟩
    let weights: Vec<Complex64> = (0..s.len()).map(|l| proj_right[l].conj() * proj_left[l] / s.norms[l]).collect();
    let total: f64 = weights.iter().map(|w| w.norm()).sum();
    let normalized_magnitudes = if total > 0.0 {
        weights.iter().map(|w| w.norm() / total).collect()
    } else {
        vec![0.0; weights.len()]
    };
    Ok(ModeWeights {
        weights,
        initial_state: initial_state.clone(),
        normalized_magnitudes,
    })
}

/// One row per mode: `mode,re_kappa,im_kappa,gamma_rel,abs_w,abs_w2,arg_w,p`.
pub fn modes_csv(s: &SpectralData, w: &ModeWeights) -> String {
    let mut out = String::from("mode,re_kappa,im_kappa,gamma_rel,abs_w,abs_w2,arg_w,p\n");
    for l in 0..s.len() {
        let k = s.eigenvalues[l];
        let wl = w.weights[l];
        let _ = writeln!(
            out,
            "{l},{},{},{},{},{},{},{}",
            k.re,
            k.im,
            s.relative_rate(l),
            wl.norm(),
            wl.norm_sqr(),
            wl.arg(),
            w.normalized_magnitudes[l]
        );
    }
    out
}
