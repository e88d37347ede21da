use thiserror::Error;

/// Errors raised by the simulation and design pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("atoms {0} and {1} coincide")]
    CoincidentAtoms(usize, usize),

    #[error("eigensolver failed: {0}")]
    EigenSolver(String),

    #[error("matrix is numerically defective at mode {mode} (|<L|R>| = {overlap:.3e})")]
    DefectiveMatrix { mode: usize, overlap: f64 },

    #[error("left/right eigenvalue pairing failed: {0}")]
    PairingFailure(String),

    #[error("time step {step:.3e} exceeds the stability bound {bound:.3e}")]
    StepTooLarge { step: f64, bound: f64 },

    #[error("two-mode splitting |Re k1 - Re k2| = {0:.3e} is too small to define a period")]
    DegenerateSplit(f64),

    #[error("seed violates the minimum distance constraint (min distance {min_distance:.6}, r_min {r_min:.6})")]
    InfeasibleSeed { min_distance: f64, r_min: f64 },

    #[error("numerical failure during evaluation: {0}")]
    NumericalFailure(String),

    #[error("all {0} runs failed; first error: {1}")]
    AllRunsFailed(usize, String),
}

pub type Result<T> = std::result::Result<T, Error>;
