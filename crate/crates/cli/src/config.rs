use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use retention::dynamics::{Stepping, TimeGrid};
use retention::farfield::DEFAULT_ORDER;
use retention::geometry::{AtomArray, GeometrySpec, Perturbation};
use retention::optimizer::OptimizerSettings;
use retention::surrogate::SurrogateParams;

use crate::CliError;

/// Where the atomic structure comes from. Exactly one of `geometry`,
/// `file` or `array` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StructureConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySpec>,
    /// Rescale the generated geometry so its closest pair sits at this distance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_distance: Option<f64>,
    /// JSON file holding an atom array, or an object with a `structure` key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub array: Option<AtomArray>,
}

impl StructureConfig {
    pub fn resolve(&self, base_dir: &Path) -> Result<AtomArray, CliError> {
        let sources = self.geometry.is_some() as u8 + self.file.is_some() as u8 + self.array.is_some() as u8;
        if sources != 1 {
            return Err(CliError::Config(
                "structure needs exactly one of `geometry`, `file` or `array`".into(),
            ));
        }
        if self.min_distance.is_some() && self.geometry.is_none() {
            return Err(CliError::Config("`min_distance` only applies to `geometry`".into()));
        }
        if let Some(spec) = &self.geometry {
            let arr = spec.build()?;
            return Ok(match self.min_distance {
                Some(d) => arr.scaled_to_min_distance(d)?,
                None => arr,
            });
        }
        if let Some(arr) = &self.array {
            return Ok(arr.clone());
        }
        let path = self.file.as_ref().expect("checked above");
        let path = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let value = value.get("structure").cloned().unwrap_or(value);
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub t_end: f64,
    pub samples: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_end: retention::dynamics::DEFAULT_T_STAR,
            samples: retention::dynamics::DEFAULT_SAMPLES,
        }
    }
}

impl TimeConfig {
    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        Ok(TimeGrid::uniform(self.t_end, self.samples)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    /// Also propagate with RK4 and report the agreement.
    pub ode: bool,
    pub stepping: Stepping,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            ode: true,
            stepping: Stepping::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeConfig {
    pub r_min: f64,
    pub n_runs: usize,
    pub sigma: f64,
    pub settings: OptimizerSettings,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            r_min: 0.1,
            n_runs: 1,
            sigma: 0.01,
            settings: OptimizerSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FarfieldConfig {
    pub order: usize,
    /// Repeat the integration at twice the order and report the change.
    pub refinement: bool,
    /// Modes whose full angular pattern is written; empty selects the mode
    /// with the largest storage-atom weight.
    pub pattern_modes: Vec<usize>,
}

impl Default for FarfieldConfig {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            refinement: true,
            pattern_modes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    #[default]
    Robustness,
    Correlation,
    SeedDependence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub kind: StudyKind,
    /// Ensemble size (robustness, correlation).
    pub n_trials: usize,
    pub perturbation: Perturbation,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            kind: StudyKind::Robustness,
            n_trials: 100,
            perturbation: Perturbation::xyz(0.01),
        }
    }
}

/// Full description of a run. Missing sections take their defaults; the
/// resolved form is what the manifest records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub structure: StructureConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub surrogate: SurrogateParams,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub optimize: OptimizeConfig,
    #[serde(default)]
    pub farfield: FarfieldConfig,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Reads a config file. A manifest written by a previous run is accepted
/// too: its `config` entry is used.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let value = match value.get("config") {
        Some(c) if value.get("files").is_some() => c.clone(),
        _ => value,
    };
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c: RunConfig =
            serde_json::from_str(r#"{"structure":{"geometry":{"kind":"ring","n":12,"a":0.45}}}"#).unwrap();
        assert_eq!(c.time, TimeConfig::default());
        assert_eq!(c.surrogate, SurrogateParams::default());
        assert_eq!(c.farfield.order, 64);
        let arr = c.structure.resolve(Path::new(".")).unwrap();
        assert_eq!(arr.len(), 13);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"structure":{},"bogus":1}"#).is_err());
    }

    #[test]
    fn structure_needs_one_source() {
        let s = StructureConfig::default();
        assert!(s.resolve(Path::new(".")).is_err());
    }
}
