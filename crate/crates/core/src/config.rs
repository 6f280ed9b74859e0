//! Config-file schema for the command-line interface.
//!
//! Every config is a JSON object with a `schema: 1` version key; unknown keys
//! are rejected so typos fail loudly before any computation starts.

use crate::mc::{
    EstimatorArm, ExperimentConfig, FilterRateArm, FilterSpec, GridKind, KernelSpec, OuModelConfig,
};
use crate::model::ParameterBox;
use crate::moments::Variant;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config `{path}`: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("unsupported schema version {found} (expected {SCHEMA_VERSION})")]
    Schema { found: u32 },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn check_schema(schema: u32) -> Result<(), ConfigError> {
    if schema != SCHEMA_VERSION {
        return Err(ConfigError::Schema { found: schema });
    }
    Ok(())
}

pub fn load<T: serde::de::DeserializeOwned + Validated>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let cfg: T = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    cfg.validate_schema()?;
    Ok(cfg)
}

pub trait Validated {
    fn validate_schema(&self) -> Result<(), ConfigError>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub schema: u32,
    pub model: OuModelConfig,
    pub t_horizon: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub grid: GridKind,
    #[serde(default)]
    pub x0: f64,
    #[serde(default = "default_substeps")]
    pub substeps: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_substeps() -> u32 {
    10
}

impl Validated for SimulateConfig {
    fn validate_schema(&self) -> Result<(), ConfigError> {
        check_schema(self.schema)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimateMode {
    /// Minimize over the box with multi-start Nelder–Mead.
    Generic,
    /// Closed-form estimation for the linear family.
    ClosedForm {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fix_theta1: Option<f64>,
    },
    /// Evaluate the contrast at a fixed `(mu, sigma)` instead of estimating.
    Eval { theta: [f64; 2] },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub schema: u32,
    pub model: OuModelConfig,
    pub input_csv: PathBuf,
    pub filter: FilterSpec,
    pub kernel: KernelSpec,
    pub variant: Variant,
    pub pbox: ParameterBox,
    pub estimator: EstimateMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl Validated for EstimateConfig {
    fn validate_schema(&self) -> Result<(), ConfigError> {
        check_schema(self.schema)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub schema: u32,
    pub experiment: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Validated for McConfig {
    fn validate_schema(&self) -> Result<(), ConfigError> {
        check_schema(self.schema)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub schema: u32,
    pub experiment: ExperimentConfig,
    pub arms: Vec<EstimatorArm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Validated for CompareConfig {
    fn validate_schema(&self) -> Result<(), ConfigError> {
        check_schema(self.schema)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotSpec {
    pub n_points: usize,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelCheckConfig {
    pub schema: u32,
    pub kernel: KernelSpec,
    /// Moment orders to certify; defaults to `0..=level` for oscillating
    /// kernels and to none for the plain one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<Vec<u32>>,
    #[serde(default = "default_tolerance_scale")]
    pub tolerance_scale: f64,
    #[serde(default = "default_panels")]
    pub panels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plot: Option<PlotSpec>,
}

fn default_tolerance_scale() -> f64 {
    1e-8
}

fn default_panels() -> usize {
    256
}

impl Validated for KernelCheckConfig {
    fn validate_schema(&self) -> Result<(), ConfigError> {
        check_schema(self.schema)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DiagnoseMode {
    ConditionalMoment {
        x: f64,
        deltas: Vec<f64>,
        replications: usize,
    },
    FilterRate {
        t_horizon: f64,
        n_steps: usize,
        paths: usize,
        arm: FilterRateArm,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub schema: u32,
    pub model: OuModelConfig,
    pub filter: FilterSpec,
    pub kernel: KernelSpec,
    pub seed: u64,
    pub diagnostic: DiagnoseMode,
}

impl Validated for DiagnoseConfig {
    fn validate_schema(&self) -> Result<(), ConfigError> {
        check_schema(self.schema)
    }
}

/// Read a `t,x` path CSV. Malformed rows are a config error; a file with
/// fewer than two observations is reported as insufficient data by the
/// caller's estimation layer.
pub fn read_path_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if ln == 0 && line.starts_with('t') {
            continue; // header
        }
        let mut parts = line.split(',');
        let (t, x) = (parts.next(), parts.next());
        match (t, x) {
            (Some(t), Some(x)) => {
                let t: f64 = t.trim().parse().map_err(|_| {
                    ConfigError::Invalid(format!("bad time value on line {}", ln + 1))
                })?;
                let x: f64 = x.trim().parse().map_err(|_| {
                    ConfigError::Invalid(format!("bad state value on line {}", ln + 1))
                })?;
                times.push(t);
                values.push(x);
            }
            _ => {
                return Err(ConfigError::Invalid(format!(
                    "expected `t,x` on line {}",
                    ln + 1
                )))
            }
        }
    }
    Ok((times, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys_and_wrong_schema() {
        let bad: Result<SimulateConfig, _> = serde_json::from_str(
            r#"{"schema":1،"model":{}}"#,
        );
        assert!(bad.is_err());
        let unknown: Result<SimulateConfig, _> = serde_json::from_str(
            r#"{"schema":1,"model":{"theta1":-1.0,"theta2":2.0,"sigma":0.5,"gamma":1.0,"lambda":0.0,"mu_J":0.0,"sigma_J":1.0},"t_horizon":1.0,"n_steps":10,"seed":1,"bogus":3}"#,
        );
        assert!(unknown.is_err());
        let cfg: SimulateConfig = serde_json::from_str(
            r#"{"schema":2,"model":{"theta1":-1.0,"theta2":2.0,"sigma":0.5,"gamma":1.0,"lambda":0.0,"mu_J":0.0,"sigma_J":1.0},"t_horizon":1.0,"n_steps":10,"seed":1}"#,
        )
        .unwrap();
        assert!(matches!(
            cfg.validate_schema(),
            Err(ConfigError::Schema { found: 2 })
        ));
    }

    #[test]
    fn estimate_mode_parses() {
        let cfg: EstimateConfig = serde_json::from_str(
            r#"{"schema":1,"model":{"theta1":-1.0,"theta2":2.0,"sigma":0.5,"gamma":1.0,"lambda":0.0,"mu_J":0.0,"sigma_J":1.0},
                "input_csv":"p.csv","filter":{"beta":0.49,"c":2.0},"kernel":{"level":0},
                "variant":"exact-ou","pbox":{"mu_lo":0.0,"mu_hi":4.0,"sigma_lo":0.1,"sigma_hi":2.0},
                "estimator":{"mode":"eval","theta":[2.0,0.5]}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.estimator, EstimateMode::Eval { .. }));
    }
}
