//! Declarative experiment configuration. One TOML file drives ingest, pool
//! construction, and evaluation; CLI flags override individual keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use volregime_core::sampler::Strategy;

use crate::ingest::SourceFormat;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: SourceFormat,
    #[serde(default = "default_dataset_id")]
    pub dataset_id: String,
}

fn default_format() -> SourceFormat {
    SourceFormat::Auto
}

fn default_dataset_id() -> String {
    "dataset".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    /// Input window length w.
    pub window: usize,
    pub train_fraction: f64,
    /// Regime-threshold quantile q.
    pub quantile: f64,
    /// Demonstration pool size n.
    pub pool_size: usize,
    /// Refinement iterations J.
    pub refine_iterations: u32,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            window: 7,
            train_fraction: 0.7,
            quantile: 0.8,
            pool_size: 500,
            refine_iterations: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub strategy: Strategy,
    pub k: usize,
    /// Low-pool fraction for the fixed-prior strategy; absent means "use
    /// the empirical low-regime fraction of the pool".
    pub alpha: Option<f64>,
    pub alpha_low: f64,
    pub alpha_high: f64,
    /// Recent-volatility lookback m.
    pub m: usize,
    /// Regime-estimate threshold override; absent means "reuse tau".
    pub tau_prime: Option<f64>,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            strategy: Strategy::LabelEstimate,
            k: 5,
            alpha: None,
            alpha_low: 0.8,
            alpha_high: 0.2,
            m: 3,
            tau_prime: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// `remote`, `mock:echo`, `mock:cheating_oracle`, `mock:corrective`,
    /// or `mock:constant:<value>`.
    pub backend: String,
    pub endpoint: String,
    pub model_name: String,
    pub timeout_seconds: u64,
    pub max_retries: u32,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            backend: "mock:echo".into(),
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-4o-mini".into(),
            timeout_seconds: 60,
            max_retries: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedsSection {
    pub pool: u64,
    pub sampler: u64,
}

impl Default for SeedsSection {
    fn default() -> Self {
        Self { pool: 1, sampler: 2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodsSection {
    pub classical: Vec<String>,
    pub icl: Vec<String>,
}

impl Default for MethodsSection {
    fn default() -> Self {
        Self {
            classical: ["rolling_mean", "har", "garch", "gjr_garch"]
                .map(String::from)
                .to_vec(),
            icl: ["one_shot", "random", "fixed_prior", "label_estimate"]
                .map(String::from)
                .to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub methods: MethodsSection,
    #[serde(default)]
    pub seeds: SeedsSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_path_buf(), source: e })?;
        let config: Self = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.pipeline;
        if p.window == 0 {
            return Err(ConfigError::Invalid("window must be positive".into()));
        }
        if !(p.train_fraction > 0.0 && p.train_fraction < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "train_fraction must lie in (0, 1), got {}",
                p.train_fraction
            )));
        }
        if !(0.0..=1.0).contains(&p.quantile) {
            return Err(ConfigError::Invalid(format!("quantile must lie in [0, 1], got {}", p.quantile)));
        }
        if self.sampler.m >= p.window {
            return Err(ConfigError::Invalid(format!(
                "sampler lookback m={} must be smaller than window w={}",
                self.sampler.m, p.window
            )));
        }
        Ok(())
    }
}
