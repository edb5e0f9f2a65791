//! Experiment configuration: a single JSON document naming the grid, the
//! stepping policy, the initial-data family, companion fields, and the
//! verification settings. Loading hashes the raw bytes so artifacts can
//! prove which config produced them.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use krflow_core::flow::{CompanionSpec, StepPolicy};
use krflow_core::geometry::{beta_family, chebyshev_perturbation, round_profile, Parity};
use krflow_core::{Grid, MetricProfile, PerturbationSpec, VerificationConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Polynomial degree of the collocation grid (N + 1 nodes).
    pub n: usize,
    #[serde(default)]
    pub policy: StepPolicy,
    pub initial: InitialData,
    pub t_max: f64,
    #[serde(default)]
    pub companions: Vec<CompanionSpec>,
    #[serde(default)]
    pub verification: VerificationConfig,
    /// Artifact directory. Relative paths (and the default, the config
    /// file stem) resolve against `$KRFLOW_OUT`, falling back to `./out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

/// Initial profile family. Sampled coefficient sets always carry their
/// seed, so identical configs draw identical data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    Round,
    Beta {
        beta: f64,
    },
    ChebyshevPerturbation {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        coeffs: Vec<(usize, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sampled: Option<SampledCoeffs>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledCoeffs {
    pub max_degree: usize,
    pub amplitude: f64,
    pub parity: Parity,
    pub seed: u64,
}

/// Parsed config plus the identity of the file it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// Hex SHA-256 of the raw config bytes.
    pub sha256: String,
    /// File stem, the default artifact directory name.
    pub stem: String,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let bytes = std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
    let config: ExperimentConfig = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing config {}", path.display()))?;
    config.validate()?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    Ok(LoadedConfig {
        config,
        sha256: format!("{:x}", Sha256::digest(&bytes)),
        stem,
    })
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        self.verification.validate()?;
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            bail!("t_max = {} must be a positive finite time", self.t_max);
        }
        if let InitialData::ChebyshevPerturbation { coeffs, sampled } = &self.initial {
            match (coeffs.is_empty(), sampled) {
                (false, Some(_)) => {
                    bail!("initial data gives both explicit coefficients and a sampled family; choose one")
                }
                (true, None) => bail!("chebyshev-perturbation needs coeffs or a sampled family"),
                _ => {}
            }
        }
        Ok(())
    }

    /// Builds the initial profile; positivity and boundary conditions are
    /// checked here, before any stepping.
    pub fn initial_profile(&self, grid: Arc<Grid>) -> Result<MetricProfile> {
        let profile = match &self.initial {
            InitialData::Round => round_profile(grid),
            InitialData::Beta { beta } => beta_family(grid, *beta)?,
            InitialData::ChebyshevPerturbation { coeffs, sampled } => {
                let spec = match sampled {
                    Some(s) => {
                        PerturbationSpec::sampled(s.max_degree, s.amplitude, s.parity, s.seed)
                    }
                    None => PerturbationSpec::new(coeffs.clone()),
                };
                chebyshev_perturbation(grid, &spec)?
            }
        };
        Ok(profile)
    }

    /// Artifact directory for this config, `stem` being the config file
    /// stem used when `out_dir` is absent.
    pub fn run_dir(&self, stem: &str) -> PathBuf {
        let root = std::env::var_os("KRFLOW_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out"));
        match &self.out_dir {
            Some(dir) if dir.is_absolute() => dir.clone(),
            Some(dir) => root.join(dir),
            None => root.join(stem),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use krflow_core::flow::DtRule;

    fn minimal(initial: &str) -> String {
        format!(r#"{{"n": 16, "initial": {initial}, "t_max": 1.0}}"#)
    }

    #[test]
    fn minimal_config_round_trips_with_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(&minimal(r#"{"family": "round"}"#)).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.policy, StepPolicy::default());
        assert!(matches!(cfg.policy.dt, DtRule::Fixed { dt } if dt == 1e-4));
        assert!(cfg.companions.is_empty());
    }

    #[test]
    fn perturbation_requires_exactly_one_coefficient_source() {
        let both: ExperimentConfig = serde_json::from_str(&minimal(
            r#"{"family": "chebyshev-perturbation",
                "coeffs": [[2, 0.1]],
                "sampled": {"max_degree": 4, "amplitude": 0.1, "parity": "even", "seed": 7}}"#,
        ))
        .unwrap();
        assert!(both.validate().is_err());
        let neither: ExperimentConfig =
            serde_json::from_str(&minimal(r#"{"family": "chebyshev-perturbation"}"#)).unwrap();
        assert!(neither.validate().is_err());
    }

    #[test]
    fn sampled_family_without_seed_is_rejected_at_parse_time() {
        let result: std::result::Result<ExperimentConfig, _> = serde_json::from_str(&minimal(
            r#"{"family": "chebyshev-perturbation",
                "sampled": {"max_degree": 4, "amplitude": 0.1, "parity": "even"}}"#,
        ));
        assert!(result.is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let result: std::result::Result<ExperimentConfig, _> = serde_json::from_str(
            r#"{"n": 16, "initial": {"family": "round"}, "t_max": 1.0, "tmax": 2.0}"#,
        );
        assert!(result.is_err());
    }

    #[test]
    fn run_dir_resolution_prefers_absolute_out_dir() {
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&minimal(r#"{"family": "round"}"#)).unwrap();
        cfg.out_dir = Some(PathBuf::from("/tmp/abs"));
        assert_eq!(cfg.run_dir("stem"), PathBuf::from("/tmp/abs"));
    }
}
