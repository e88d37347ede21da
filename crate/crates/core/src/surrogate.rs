//! Spectral surrogate cost
//!
//! F = α Σ_ℓ p_ℓ ln(Γ_ℓ/γ0) − β Σ_ℓ p_ℓ ln p_ℓ
//!
//! with p_ℓ = |w_ℓ| / Σ|w|. Lower is better.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::AtomArray;
use crate::hamiltonian::build_hamiltonian;
use crate::spectral::{decompose, localized_state, mode_weights, ModeWeights, SpectralData};

/// Floor applied to Γ_ℓ/γ0 before taking the logarithm.
pub const RATE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct SurrogateParams {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Deserialize)]
struct RawParams {
    alpha: f64,
    beta: f64,
}

impl TryFrom<RawParams> for SurrogateParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        Self::new(r.alpha, r.beta)
    }
}

impl SurrogateParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidInput(format!("alpha and beta must be finite and non-negative (got {alpha}, {beta})")));
        }
        if alpha == 0.0 && beta == 0.0 {
            return Err(Error::InvalidInput("alpha and beta cannot both be zero".into()));
        }
        Ok(Self { alpha, beta })
    }
}

impl Default for SurrogateParams {
    /// (α, β) = (1, 3).
    fn default() -> Self {
        Self { alpha: 1.0, beta: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateScore {
    #[serde(rename = "F")]
    pub f: f64,
    /// Σ p ln(Γ/γ0)
    pub log_rate_term: f64,
    /// −Σ p ln p
    pub entropy_term: f64,
}

/// Score from normalized magnitudes and relative rates Γ_ℓ/γ0.
pub fn surrogate_from_parts(p: &[f64], relative_rates: &[f64], params: SurrogateParams) -> SurrogateScore {
    let mut log_rate_term = 0.0;
    let mut entropy_term = 0.0;
    for (&pl, &g) in p.iter().zip(relative_rates) {
        if pl > 0.0 {
            log_rate_term += pl * g.max(RATE_FLOOR).ln();
            entropy_term -= pl * pl.ln();
        }
    }
    SurrogateScore {
        f: params.alpha * log_rate_term + params.beta * entropy_term,
        log_rate_term,
        entropy_term,
    }
}

pub fn surrogate_cost(s: &SpectralData, w: &ModeWeights, params: SurrogateParams) -> SurrogateScore {
    let rates: Vec<f64> = (0..s.len()).map(|l| s.relative_rate(l)).collect();
    surrogate_from_parts(&w.normalized_magnitudes, &rates, params)
}

/// Builds H for `array`, decomposes it and scores the storage-atom state.
pub fn surrogate_for_array(array: &AtomArray, params: SurrogateParams) -> Result<SurrogateScore> {
    let h = build_hamiltonian(array)?;
    let s = decompose(&h)?;
    let w = mode_weights(&s, &localized_state(array.len(), array.storage_index()))?;
    Ok(surrogate_cost(&s, &w, params))
}
