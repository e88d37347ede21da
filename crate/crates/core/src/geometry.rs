//! Atomic configurations with a designated storage atom.
//!
//! Lengths are in units of the transition wavelength λ0, so with ω0 = 2π the
//! wavenumber is k0 = 2π. All generators place atoms in the z = 0 plane.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shared transition dipole orientation, a complex unit 3-vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vector3<Complex64>", into = "Vector3<Complex64>")]
pub struct Dipole(Vector3<Complex64>);

impl Dipole {
    pub fn new(v: Vector3<Complex64>) -> Result<Self> {
        if v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidInput("dipole has non-finite entries".into()));
        }
        let norm2: f64 = v.iter().map(|c| c.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "dipole must be a unit vector (|d|^2 = {norm2})"
            )));
        }
        Ok(Self(v))
    }

    /// Normalizes an arbitrary non-zero vector.
    pub fn normalized(v: Vector3<Complex64>) -> Result<Self> {
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidInput("dipole vector has zero length".into()));
        }
        Self::new(v.map(|c| c / norm))
    }

    /// Circular polarization (1, i, 0)/√2.
    pub fn circular() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self(Vector3::new(
            Complex64::new(s, 0.0),
            Complex64::new(0.0, s),
            Complex64::new(0.0, 0.0),
        ))
    }

    /// Linear polarization along z.
    pub fn z() -> Self {
        Self(Vector3::new(
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        ))
    }

    pub fn vector(&self) -> &Vector3<Complex64> {
        &self.0
    }
}

impl TryFrom<Vector3<Complex64>> for Dipole {
    type Error = Error;
    fn try_from(v: Vector3<Complex64>) -> Result<Self> {
        Dipole::new(v)
    }
}

impl From<Dipole> for Vector3<Complex64> {
    fn from(d: Dipole) -> Self {
        d.0
    }
}

/// A configuration of identical two-level atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AtomArrayRepr", into = "AtomArrayRepr")]
pub struct AtomArray {
    positions: Vec<Vector3<f64>>,
    storage_index: usize,
    dipole: Dipole,
    gamma0: f64,
    omega0: f64,
}

#[derive(Serialize, Deserialize)]
struct AtomArrayRepr {
    positions: Vec<Vector3<f64>>,
    storage_index: usize,
    dipole: Dipole,
    #[serde(default = "default_gamma0")]
    gamma0: f64,
    #[serde(default = "default_omega0")]
    omega0: f64,
}

fn default_gamma0() -> f64 {
    1.0
}

fn default_omega0() -> f64 {
    TAU
}

impl TryFrom<AtomArrayRepr> for AtomArray {
    type Error = Error;
    fn try_from(r: AtomArrayRepr) -> Result<Self> {
        AtomArray::with_rates(r.positions, r.storage_index, r.dipole, r.gamma0, r.omega0)
    }
}

impl From<AtomArray> for AtomArrayRepr {
    fn from(a: AtomArray) -> Self {
        AtomArrayRepr {
            positions: a.positions,
            storage_index: a.storage_index,
            dipole: a.dipole,
            gamma0: a.gamma0,
            omega0: a.omega0,
        }
    }
}

impl AtomArray {
    /// Array with γ0 = 1 and ω0 = 2π.
    pub fn new(positions: Vec<Vector3<f64>>, storage_index: usize, dipole: Dipole) -> Result<Self> {
        Self::with_rates(positions, storage_index, dipole, 1.0, TAU)
    }

    pub fn with_rates(
        positions: Vec<Vector3<f64>>,
        storage_index: usize,
        dipole: Dipole,
        gamma0: f64,
        omega0: f64,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidGeometry("array has no atoms".into()));
        }
        if storage_index >= positions.len() {
            return Err(Error::InvalidGeometry(format!(
                "storage index {storage_index} out of range for {} atoms",
                positions.len()
            )));
        }
        if !(gamma0 > 0.0 && gamma0.is_finite()) || !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(Error::InvalidGeometry("gamma0 and omega0 must be positive".into()));
        }
        if positions.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidGeometry("non-finite atom position".into()));
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if (positions[i] - positions[j]).norm() == 0.0 {
                    return Err(Error::CoincidentAtoms(i, j));
                }
            }
        }
        Ok(Self {
            positions,
            storage_index,
            dipole,
            gamma0,
            omega0,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn storage_index(&self) -> usize {
        self.storage_index
    }

    pub fn storage_position(&self) -> Vector3<f64> {
        self.positions[self.storage_index]
    }

    pub fn dipole(&self) -> &Dipole {
        &self.dipole
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    /// Wavenumber k0 = ω0 / c with c = 1.
    pub fn k0(&self) -> f64 {
        self.omega0
    }

    /// Same atoms, storage index and rates at new positions.
    pub fn with_positions(&self, positions: Vec<Vector3<f64>>) -> Result<Self> {
        if positions.len() != self.positions.len() {
            return Err(Error::InvalidGeometry(format!(
                "expected {} positions, got {}",
                self.positions.len(),
                positions.len()
            )));
        }
        Self::with_rates(positions, self.storage_index, self.dipole, self.gamma0, self.omega0)
    }

    pub fn with_dipole(&self, dipole: Dipole) -> Self {
        Self { dipole, ..self.clone() }
    }

    pub fn with_gamma0(&self, gamma0: f64) -> Result<Self> {
        Self::with_rates(self.positions.clone(), self.storage_index, self.dipole, gamma0, self.omega0)
    }

    /// Rigid translation of every atom.
    pub fn translated(&self, shift: Vector3<f64>) -> Self {
        Self {
            positions: self.positions.iter().map(|p| p + shift).collect(),
            ..self.clone()
        }
    }

    /// Uniform scaling about the storage atom so that the minimum pair
    /// distance becomes `r_min`.
    pub fn scaled_to_min_distance(&self, r_min: f64) -> Result<Self> {
        if !(r_min > 0.0) {
            return Err(Error::InvalidInput("r_min must be positive".into()));
        }
        let current = min_pair_distance(self)?;
        let factor = r_min / current;
        let center = self.storage_position();
        let positions = self
            .positions
            .iter()
            .map(|p| center + (p - center) * factor)
            .collect();
        self.with_positions(positions)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Square,
    Sunflower,
    Ring,
}

/// Where the storage atom sits in a square lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SquareStorage {
    /// The storage atom is the lattice site (⌊n/2⌋, ⌊n/2⌋); N = n².
    #[default]
    GridSite,
    /// For even n the storage atom is an extra atom at the interstitial
    /// center; odd n falls back to the central site.
    Interstitial,
}

/// Parameters of one of the generated geometries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub kind: GeometryKind,
    pub n: usize,
    pub a: f64,
    #[serde(default = "Dipole::circular")]
    pub dipole: Dipole,
    #[serde(default, skip_serializing_if = "is_default_storage")]
    pub square_storage: SquareStorage,
}

fn is_default_storage(s: &SquareStorage) -> bool {
    *s == SquareStorage::GridSite
}

impl GeometrySpec {
    pub fn new(kind: GeometryKind, n: usize, a: f64, dipole: Dipole) -> Self {
        Self {
            kind,
            n,
            a,
            dipole,
            square_storage: SquareStorage::GridSite,
        }
    }

    pub fn build(&self) -> Result<AtomArray> {
        match self.kind {
            GeometryKind::Square => make_square(self),
            GeometryKind::Sunflower => make_sunflower(self),
            GeometryKind::Ring => make_ring(self),
        }
    }

    fn check(&self, kind: GeometryKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidGeometry(format!(
                "expected a {kind:?} spec, got {:?}",
                self.kind
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidGeometry(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::InvalidGeometry(format!("a must be positive, got {}", self.a)));
        }
        Ok(())
    }
}

/// n×n grid with spacing a.
pub fn make_square(spec: &GeometrySpec) -> Result<AtomArray> {
    spec.check(GeometryKind::Square)?;
    let n = spec.n;
    let a = spec.a;
    match spec.square_storage {
        SquareStorage::Interstitial if n % 2 == 0 => {
            let offset = (n as f64 - 1.0) / 2.0;
            let mut positions = vec![Vector3::zeros()];
            for ix in 0..n {
                for iy in 0..n {
                    positions.push(Vector3::new(
                        (ix as f64 - offset) * a,
                        (iy as f64 - offset) * a,
                        0.0,
                    ));
                }
            }
            AtomArray::new(positions, 0, spec.dipole)
        }
        _ => {
            // storage site at the origin; for odd n the grid is centered
            let center = (n / 2) as f64;
            let mut positions = Vec::with_capacity(n * n);
            for ix in 0..n {
                for iy in 0..n {
                    positions.push(Vector3::new(
                        (ix as f64 - center) * a,
                        (iy as f64 - center) * a,
                        0.0,
                    ));
                }
            }
            let storage = (n / 2) * n + n / 2;
            AtomArray::new(positions, storage, spec.dipole)
        }
    }
}

/// Golden-angle increment π(3 − √5).
pub fn golden_angle() -> f64 {
    PI * (3.0 - 5f64.sqrt())
}

fn sunflower_positions(count: usize, r_c: f64) -> Vec<Vector3<f64>> {
    let theta0 = golden_angle();
    (0..=count)
        .map(|j| {
            let r = (j as f64).sqrt() * r_c;
            let theta = j as f64 * theta0;
            Vector3::new(r * theta.cos(), r * theta.sin(), 0.0)
        })
        .collect()
}

/// Mean distance from each atom to its nearest neighbor.
pub fn mean_nearest_neighbor_distance(positions: &[Vector3<f64>]) -> f64 {
    let n = positions.len();
    if n < 2 {
        return f64::NAN;
    }
    let total: f64 = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (positions[i] - positions[j]).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / n as f64
}

/// Spiral scale r_c for which the mean nearest-neighbor distance of the
/// sunflower (storage atom included) equals `a`.
///
/// Every position is proportional to r_c, so the mean distance is linear in
/// r_c and the condition is solved by one evaluation at r_c = 1.
pub fn sunflower_scale(n: usize, a: f64) -> f64 {
    let unit = mean_nearest_neighbor_distance(&sunflower_positions(n * n, 1.0));
    a / unit
}

/// Storage atom at the origin (j = 0) surrounded by n² atoms at
/// (√j·r_c, j·π(3 − √5)), j = 1..n².
pub fn make_sunflower(spec: &GeometrySpec) -> Result<AtomArray> {
    spec.check(GeometryKind::Sunflower)?;
    let r_c = sunflower_scale(spec.n, spec.a);
    if !(r_c.is_finite() && r_c > 0.0) {
        return Err(Error::InvalidGeometry("sunflower scale is not finite".into()));
    }
    AtomArray::new(sunflower_positions(spec.n * spec.n, r_c), 0, spec.dipole)
}

/// Storage atom at the origin surrounded by n atoms on a circle of radius a.
pub fn make_ring(spec: &GeometrySpec) -> Result<AtomArray> {
    spec.check(GeometryKind::Ring)?;
    let mut positions = vec![Vector3::zeros()];
    positions.extend((0..spec.n).map(|j| {
        let phi = TAU * j as f64 / spec.n as f64;
        Vector3::new(spec.a * phi.cos(), spec.a * phi.sin(), 0.0)
    }));
    AtomArray::new(positions, 0, spec.dipole)
}

/// Gaussian displacement of atomic positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Per-axis standard deviation on x and y.
    pub sigma_xy: f64,
    /// Standard deviation on z.
    pub sigma_z: f64,
    /// Whether the storage atom moves too.
    #[serde(default)]
    pub include_storage: bool,
}

impl Perturbation {
    pub fn xy(sigma: f64) -> Self {
        Self {
            sigma_xy: sigma,
            sigma_z: 0.0,
            include_storage: false,
        }
    }

    pub fn xyz(sigma: f64) -> Self {
        Self {
            sigma_xy: sigma,
            sigma_z: sigma,
            include_storage: true,
        }
    }

    /// In-plane noise of total magnitude σ: ⟨δx² + δy²⟩ = σ².
    pub fn in_plane_total(sigma: f64) -> Self {
        Self {
            sigma_xy: sigma / 2f64.sqrt(),
            sigma_z: 0.0,
            include_storage: true,
        }
    }

    pub fn out_of_plane(sigma: f64) -> Self {
        Self {
            sigma_xy: 0.0,
            sigma_z: sigma,
            include_storage: true,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_xy == 0.0 && self.sigma_z == 0.0
    }
}

/// Applies independent Gaussian noise to the atoms.
///
/// Three normal deviates are drawn per displaced atom in index order even
/// when one of the deviations is zero, so a given seed yields the same
/// underlying noise for every noise amplitude.
pub fn perturb<R: Rng + ?Sized>(array: &AtomArray, p: &Perturbation, rng: &mut R) -> Result<AtomArray> {
    if !(p.sigma_xy >= 0.0) || !(p.sigma_z >= 0.0) {
        return Err(Error::InvalidInput("perturbation deviations must be non-negative".into()));
    }
    let mut positions = array.positions.clone();
    for (i, pos) in positions.iter_mut().enumerate() {
        if i == array.storage_index && !p.include_storage {
            continue;
        }
        let dx: f64 = StandardNormal.sample(rng);
        let dy: f64 = StandardNormal.sample(rng);
        let dz: f64 = StandardNormal.sample(rng);
        if p.sigma_xy > 0.0 {
            pos.x += p.sigma_xy * dx;
            pos.y += p.sigma_xy * dy;
        }
        if p.sigma_z > 0.0 {
            pos.z += p.sigma_z * dz;
        }
    }
    array.with_positions(positions)
}

/// Smallest separation over all pairs of atoms.
pub fn min_pair_distance(array: &AtomArray) -> Result<f64> {
    min_distance_of(array.positions())
}

pub fn min_distance_of(positions: &[Vector3<f64>]) -> Result<f64> {
    if positions.len() < 2 {
        return Err(Error::InvalidInput("need at least two atoms".into()));
    }
    let mut best = f64::INFINITY;
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            best = best.min((positions[i] - positions[j]).norm());
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn spec(kind: GeometryKind, n: usize, a: f64) -> GeometrySpec {
        GeometrySpec::new(kind, n, a, Dipole::circular())
    }

    #[test]
    fn square_interstitial_n2() {
        let mut s = spec(GeometryKind::Square, 2, 0.25);
        s.square_storage = SquareStorage::Interstitial;
        let arr = s.build().unwrap();
        assert_eq!(arr.len(), 5);
        assert_eq!(arr.storage_position(), Vector3::zeros());
        for p in arr.positions().iter().skip(1) {
            assert!((p.x.abs() - 0.125).abs() < 1e-15 && (p.y.abs() - 0.125).abs() < 1e-15);
        }
        let d = min_pair_distance(&arr).unwrap();
        assert!((d - 0.125 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn square_interstitial_count_n10() {
        let mut s = spec(GeometryKind::Square, 10, 0.25);
        s.square_storage = SquareStorage::Interstitial;
        assert_eq!(s.build().unwrap().len(), 101);
    }

    #[test]
    fn square_grid_site_storage() {
        let arr = spec(GeometryKind::Square, 10, 0.1).build().unwrap();
        assert_eq!(arr.len(), 100);
        assert_eq!(arr.storage_position(), Vector3::zeros());
        assert!((min_pair_distance(&arr).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn square_odd_n_storage_on_center_site() {
        for storage in [SquareStorage::GridSite, SquareStorage::Interstitial] {
            let mut s = spec(GeometryKind::Square, 3, 0.1);
            s.square_storage = storage;
            let arr = s.build().unwrap();
            assert_eq!(arr.len(), 9);
            let c = arr.storage_position();
            assert_eq!(c, Vector3::zeros());
            let nn = arr
                .positions()
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != arr.storage_index())
                .map(|(_, p)| (p - c).norm())
                .fold(f64::INFINITY, f64::min);
            assert!((nn - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(spec(GeometryKind::Square, 1, 0.25).build().is_err());
        assert!(spec(GeometryKind::Ring, 12, 0.0).build().is_err());
        assert!(spec(GeometryKind::Sunflower, 10, -1.0).build().is_err());
        assert!(make_ring(&spec(GeometryKind::Square, 4, 1.0)).is_err());
    }

    #[test]
    fn sunflower_first_angle() {
        let arr = spec(GeometryKind::Sunflower, 3, 0.2).build().unwrap();
        let p = arr.positions()[1];
        let angle = p.y.atan2(p.x).rem_euclid(TAU);
        assert!((angle - 2.399963229728653).abs() < 1e-12);
        assert!((golden_angle() - 2.39996).abs() < 1e-5);
        assert_eq!(arr.storage_index(), 0);
        assert_eq!(arr.positions()[0], Vector3::zeros());
    }

    #[test]
    fn sunflower_mean_nn_distance() {
        let arr = spec(GeometryKind::Sunflower, 10, 0.25).build().unwrap();
        assert_eq!(arr.len(), 101);
        let m = mean_nearest_neighbor_distance(arr.positions());
        assert!((m - 0.25).abs() < 1e-12 * 0.25);
    }

    #[test]
    fn ring_examples() {
        let arr = spec(GeometryKind::Ring, 12, 0.45).build().unwrap();
        assert_eq!(arr.len(), 13);
        let chord = 2.0 * 0.45 * (PI / 12.0).sin();
        assert!((min_pair_distance(&arr).unwrap() - chord).abs() < 1e-12);
        assert!((chord - 0.23294).abs() < 1e-5);

        assert_eq!(spec(GeometryKind::Ring, 10, 0.25).build().unwrap().len(), 11);

        let arr = spec(GeometryKind::Ring, 4, 1.0).build().unwrap();
        let expect = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(-1.0, 0.0, 0.0),
            Vector3::new(0.0, -1.0, 0.0),
        ];
        for (p, e) in arr.positions().iter().zip(expect.iter()) {
            assert!((p - e).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let arr = spec(GeometryKind::Ring, 12, 0.45).build().unwrap();
        let mut rng = seeded(3);
        let out = perturb(&arr, &Perturbation::xyz(0.0), &mut rng).unwrap();
        assert_eq!(out, arr);
    }

    #[test]
    fn perturb_keeps_storage_fixed_unless_flagged() {
        let arr = spec(GeometryKind::Ring, 12, 0.45).build().unwrap();
        let out = perturb(&arr, &Perturbation::xy(0.01), &mut seeded(1)).unwrap();
        assert_eq!(out.storage_position(), arr.storage_position());
        assert!(out.positions().iter().all(|p| p.z == 0.0));
        let out = perturb(&arr, &Perturbation::xyz(0.01), &mut seeded(1)).unwrap();
        assert_ne!(out.storage_position(), arr.storage_position());
    }

    #[test]
    fn perturb_is_reproducible() {
        let arr = spec(GeometryKind::Sunflower, 4, 0.3).build().unwrap();
        let a = perturb(&arr, &Perturbation::xyz(0.02), &mut seeded(99)).unwrap();
        let b = perturb(&arr, &Perturbation::xyz(0.02), &mut seeded(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scaled_to_min_distance() {
        let arr = spec(GeometryKind::Ring, 12, 1.0).build().unwrap();
        let s = arr.scaled_to_min_distance(0.1).unwrap();
        assert!((min_pair_distance(&s).unwrap() - 0.1).abs() < 1e-14);
        let expected_radius = 0.1 / (2.0 * (PI / 12.0).sin());
        assert!((s.positions()[1].norm() - expected_radius).abs() < 1e-14);
    }

    #[test]
    fn min_distance_needs_two_atoms() {
        let arr = AtomArray::new(vec![Vector3::zeros()], 0, Dipole::z()).unwrap();
        assert!(min_pair_distance(&arr).is_err());
        let two = AtomArray::new(vec![Vector3::zeros(), Vector3::new(0.1, 0.0, 0.0)], 0, Dipole::z()).unwrap();
        assert!((min_pair_distance(&two).unwrap() - 0.1).abs() < 1e-16);
    }

    #[test]
    fn array_validation() {
        let d = Dipole::z();
        assert!(AtomArray::new(vec![Vector3::zeros(), Vector3::zeros()], 0, d).is_err());
        assert!(AtomArray::new(vec![Vector3::zeros()], 1, d).is_err());
        assert!(AtomArray::new(vec![Vector3::new(f64::NAN, 0.0, 0.0)], 0, d).is_err());
        assert!(Dipole::new(Vector3::new(
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0)
        ))
        .is_err());
        let c = Dipole::circular();
        let n2: f64 = c.vector().iter().map(|z| z.norm_sqr()).sum();
        assert!((n2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let s: GeometrySpec = serde_json::from_str(
            r#"{"kind": "ring", "n": 12, "a": 0.45, "dipole": [[0.7071067811865476, 0.0], [0.0, 0.7071067811865476], [0.0, 0.0]]}"#,
        )
        .unwrap();
        assert_eq!(s.kind, GeometryKind::Ring);
        let arr = s.build().unwrap();
        let json = serde_json::to_string(&arr).unwrap();
        let back: AtomArray = serde_json::from_str(&json).unwrap();
        assert_eq!(back, arr);
        let bad = r#"{"positions": [[0,0,0],[0,0,0]], "storage_index": 0, "dipole": [[0,0],[0,0],[1,0]]}"#;
        assert!(serde_json::from_str::<AtomArray>(bad).is_err());
    }
}
