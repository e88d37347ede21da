pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod farfield;
pub mod geometry;
pub mod greens;
pub mod hamiltonian;
pub mod optimizer;
pub mod rng;
pub mod spectral;
pub mod surrogate;

pub use error::{Error, Result};
