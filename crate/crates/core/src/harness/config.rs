use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::ModelConfig;
use crate::solvers::SpectralBounds;

/// Where the spectral constants come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundsConfig {
    /// Must be `"oracle"`: derive the constants from a dense solve.
    Named(String),
    Explicit {
        gamma: f64,
        #[serde(rename = "Gamma")]
        gamma_max: f64,
        lambda_low: f64,
        #[serde(rename = "Lambda_low")]
        lambda_next: f64,
    },
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig::Named("oracle".into())
    }
}

impl BoundsConfig {
    /// `None` for oracle-derived bounds.
    pub fn explicit(&self) -> Result<Option<SpectralBounds>> {
        match self {
            BoundsConfig::Named(s) if s == "oracle" => Ok(None),
            BoundsConfig::Named(s) => Err(Error::Config(format!(
                "bounds must be \"oracle\" or a table of constants, got \"{s}\""
            ))),
            BoundsConfig::Explicit {
                gamma,
                gamma_max,
                lambda_low,
                lambda_next,
            } => SpectralBounds::new(*gamma, *gamma_max, *lambda_low, *lambda_next)
                .map(Some)
                .map_err(|e| Error::Config(e.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub trace: String,
    pub results: String,
    pub summary: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            trace: "trace".into(),
            results: "results".into(),
            summary: "summary.json".into(),
        }
    }
}

/// One experiment: a model, its constants, and the accuracies to reach.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    pub eps_targets: Vec<f64>,
    #[serde(default)]
    pub eps0: Option<f64>,
    #[serde(default)]
    pub c1: Option<f64>,
    /// Fixed value for `M = 2 ||M_perp^{-1}||`.
    #[serde(default)]
    pub m_override: Option<f64>,
    /// Use the dense value of `2 ||M_perp^{-1}||` for `M`.
    #[serde(default)]
    pub m_from_oracle: bool,
    /// Sparsity exponent of the eigenvector, if known in advance.
    #[serde(default)]
    pub known_s: Option<f64>,
    /// Run the quadratic eigenvalue step and this many frozen-shift steps
    /// after each solve.
    #[serde(default)]
    pub accelerate_steps: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_targets.is_empty() {
            return Err(Error::Config("eps_targets must not be empty".into()));
        }
        if self.eps_targets.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::Config("eps_targets must be positive".into()));
        }
        if self.eps_targets.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("eps_targets must be strictly decreasing".into()));
        }
        if self.m_override.is_some() && self.m_from_oracle {
            return Err(Error::Config("m_override and m_from_oracle are exclusive".into()));
        }
        if self.model.size < 2 {
            return Err(Error::Config("model size must be at least 2".into()));
        }
        self.bounds.explicit()?;
        Ok(())
    }
}

/// Reads a model description: either a bare model table or a full
/// experiment config with a `[model]` table.
pub fn load_model_config(path: &Path) -> Result<ModelConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let table = match value.get("model") {
        Some(toml::Value::Table(t)) => t.clone(),
        Some(_) => return Err(Error::Config("model must be a table".into())),
        None => value,
    };
    let cfg: ModelConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    if cfg.size < 2 {
        return Err(Error::Config("model size must be at least 2".into()));
    }
    Ok(cfg)
}
