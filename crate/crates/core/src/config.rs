//! Versioned JSON configuration shared by the CLI commands.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "routing": {"initial_upper": 0.05, "initial_lower": -0.05, "decay": 0.2,
//!               "prompt_ids": ["scene_analysis", "intent"]},
//!   "providers": {
//!     "baseline_a": {"producer_id": "baseline_a", "kind": "offline"},
//!     "baseline_b": {"producer_id": "baseline_b", "kind": "offline"},
//!     "prompt_default": {"kind": "offline"}
//!   },
//!   "scorer": {"kind": "passthrough"},
//!   "experiment": {"n_episodes": 1000, "base_seed": 1, "sweep": [0.1, 0.2, 0.3]}
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::RoutingConfig;
use crate::harness::ExperimentConfig;
use crate::providers::{GeneratorKind, GeneratorSpec, ProvidersConfig, ScorerSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Version(u32),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

fn field(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_episodes")]
    pub n_episodes: usize,
    #[serde(default)]
    pub base_seed: Option<u64>,
    #[serde(default)]
    pub sweep: Option<Vec<f64>>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_episodes() -> usize {
    1000
}
fn default_workers() -> usize {
    1
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            n_episodes: default_episodes(),
            base_seed: None,
            sweep: None,
            workers: default_workers(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub schema_version: u32,
    pub routing: RoutingConfig,
    pub providers: ProvidersConfig,
    #[serde(default)]
    pub scorer: ScorerSpec,
    #[serde(default)]
    pub experiment: Option<ExperimentSection>,
    /// Directory holding `manifest.toml`; the builtin templates otherwise.
    /// Relative paths resolve against the config file's directory.
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
}

impl ProjectConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::from_json(&text, &path.display().to_string())?;
        if let (Some(dir), Some(parent)) = (&cfg.templates_dir, path.parent()) {
            if dir.is_relative() {
                cfg.templates_dir = Some(parent.join(dir));
            }
        }
        Ok(cfg)
    }

    /// Checks every field and names the offending one.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Version(self.schema_version));
        }
        let r = &self.routing;
        if !(r.initial_upper.is_finite() && r.initial_upper > 0.0) {
            return Err(field("routing.initial_upper", format!("must be > 0, got {}", r.initial_upper)));
        }
        if !(r.initial_lower.is_finite() && r.initial_lower < 0.0) {
            return Err(field("routing.initial_lower", format!("must be < 0, got {}", r.initial_lower)));
        }
        if !(r.decay.is_finite() && r.decay >= 0.0) {
            return Err(field("routing.decay", format!("must be >= 0, got {}", r.decay)));
        }
        r.validate().map_err(|e| field("routing.prompt_ids", e.to_string()))?;

        let p = &self.providers;
        validate_spec("providers.baseline_a", &p.baseline_a)?;
        validate_spec("providers.baseline_b", &p.baseline_b)?;
        if let Some(GeneratorKind::Synthetic(m)) = &p.prompt_default {
            m.validate().map_err(|e| field("providers.prompt_default", e.to_string()))?;
        }
        for (id, spec) in &p.prompts {
            validate_spec(&format!("providers.prompts.{id}"), spec)?;
        }
        let resolved = p
            .resolve_prompts(&r.prompt_ids)
            .map_err(|e| field("providers.prompts", e.to_string()))?;
        let mut ids = vec![p.baseline_a.producer_id.as_str(), p.baseline_b.producer_id.as_str()];
        for spec in resolved.values() {
            if ids.contains(&spec.producer_id.as_str()) {
                return Err(field(
                    "providers",
                    format!("producer_id {:?} is used twice", spec.producer_id),
                ));
            }
            ids.push(spec.producer_id.as_str());
        }
        if p.baseline_a.producer_id == p.baseline_b.producer_id {
            return Err(field("providers.baseline_b.producer_id", "must differ from baseline_a"));
        }

        if let Some(e) = &self.experiment {
            if e.n_episodes == 0 {
                return Err(field("experiment.n_episodes", "must be >= 1"));
            }
            if e.workers == 0 {
                return Err(field("experiment.workers", "must be >= 1"));
            }
            if let Some(sweep) = &e.sweep {
                validate_sweep(sweep)?;
            }
        }
        Ok(())
    }

    /// Experiment settings with the CLI overrides applied.
    pub fn experiment_config(
        &self,
        base_seed: u64,
        sweep_override: Option<Vec<f64>>,
        workers_override: Option<usize>,
    ) -> Result<ExperimentConfig, ConfigError> {
        let section = self.experiment.clone().unwrap_or_default();
        let sweep = sweep_override.or(section.sweep);
        if let Some(s) = &sweep {
            validate_sweep(s)?;
        }
        let workers = workers_override.unwrap_or(section.workers);
        if workers == 0 {
            return Err(field("workers", "must be >= 1"));
        }
        Ok(ExperimentConfig {
            n_episodes: section.n_episodes,
            routing: self.routing.clone(),
            providers: self.providers.clone(),
            scorer: self.scorer.clone(),
            base_seed,
            sweep,
            workers,
        })
    }
}

fn validate_spec(path: &str, spec: &GeneratorSpec) -> Result<(), ConfigError> {
    if spec.producer_id.is_empty() {
        return Err(field(format!("{path}.producer_id"), "must be non-empty"));
    }
    if let GeneratorKind::Synthetic(m) = &spec.kind {
        m.validate().map_err(|e| field(format!("{path}.params"), e.to_string()))?;
    }
    Ok(())
}

fn validate_sweep(sweep: &[f64]) -> Result<(), ConfigError> {
    if sweep.is_empty() {
        return Err(field("experiment.sweep", "must not be empty"));
    }
    for (i, d) in sweep.iter().enumerate() {
        if !(d.is_finite() && *d >= 0.0) {
            return Err(field("experiment.sweep", format!("decay {d} must be >= 0")));
        }
        if sweep[..i].contains(d) {
            return Err(field("experiment.sweep", format!("decay {d} appears twice")));
        }
    }
    Ok(())
}
