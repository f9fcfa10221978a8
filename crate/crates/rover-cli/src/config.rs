//! Per-command JSON config files.
//!
//! Every subcommand accepts `--config <file>` holding a JSON object with the
//! command's optional settings. Command-line flags override config values,
//! which override built-in defaults. Schemas are strict: an unknown key is an
//! input error (exit code 2), not a silent ignore, so typos surface instead
//! of running with defaults.

use std::fs;
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use rover_core::engine::RunConfig;
use rover_core::gateway::oracle::OracleNoise;
use rover_core::gateway::remote::RemoteConfig;

/// Settings for `rover gen`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    /// Restrict generation to these catalog task ids (full catalog when
    /// absent). Unknown ids are rejected up front.
    pub tasks: Option<Vec<String>>,
    /// Cap the number of replicate videos per (task, level) pair. The
    /// catalog's own per-group counts apply when absent or larger.
    pub videos_per_level: Option<usize>,
}

/// Settings for `rover label`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelConfig {
    pub workers: Option<usize>,
}

/// Reasoning-loop overrides for `rover run`. Window/recursion toggles are
/// owned by the method and cannot be overridden here.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineOverrides {
    pub max_depth: Option<usize>,
    pub max_model_calls_per_frame: Option<u32>,
    pub frame_budget: Option<usize>,
    pub max_output_tokens: Option<u32>,
    pub temperature: Option<f64>,
}

impl EngineOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.max_depth {
            cfg.max_depth = v;
        }
        if let Some(v) = self.max_model_calls_per_frame {
            cfg.max_model_calls_per_frame = v;
        }
        if let Some(v) = self.frame_budget {
            cfg.frame_budget = v;
        }
        if let Some(v) = self.max_output_tokens {
            cfg.max_output_tokens = v;
        }
        if let Some(v) = self.temperature {
            cfg.temperature = v;
        }
    }
}

/// Scripted-oracle corruption knobs for `rover run --backend oracle`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub percent_jitter_sd: Option<f64>,
    pub description_omission_rate: Option<f64>,
}

impl NoiseConfig {
    pub fn to_noise(&self) -> OracleNoise {
        OracleNoise {
            percent_jitter_sd: self.percent_jitter_sd.unwrap_or(0.0),
            description_omission_rate: self.description_omission_rate.unwrap_or(0.0),
        }
    }
}

/// Remote-endpoint overrides for `rover run --backend remote`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteOverrides {
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub max_retries: Option<u32>,
    pub backoff_ms: Option<u64>,
    pub timeout_secs: Option<u64>,
}

impl RemoteOverrides {
    pub fn to_remote_config(&self) -> RemoteConfig {
        let mut cfg = RemoteConfig::default();
        if let Some(v) = &self.base_url {
            cfg.base_url = v.clone();
        }
        if let Some(v) = &self.model {
            cfg.model = v.clone();
        }
        if let Some(v) = &self.api_key_env {
            cfg.api_key_env = v.clone();
        }
        if let Some(v) = self.max_retries {
            cfg.max_retries = v;
        }
        if let Some(v) = self.backoff_ms {
            cfg.backoff = Duration::from_millis(v);
        }
        if let Some(v) = self.timeout_secs {
            cfg.timeout = Duration::from_secs(v);
        }
        cfg
    }
}

/// Settings for `rover run`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub method: Option<String>,
    pub backend: Option<String>,
    #[serde(default)]
    pub engine: EngineOverrides,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub remote: RemoteOverrides,
}

/// Settings for `rover eval` / `rover report`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub workers: Option<usize>,
    pub method: Option<String>,
}

/// Load a command config from `path`, or the all-defaults config when no
/// file is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("cannot read config file {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("config file {} is invalid", p.display()))
        }
    }
}
