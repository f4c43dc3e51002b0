//! Service configuration, loaded from TOML.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use arena_core::domain::{SamplingConfig, DEFAULT_SYSTEM_PROMPT};
use arena_core::moderation::{ModerationConfig, DEFAULT_CONTROL_RATE};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::MockProfile;

pub const ADMIN_TOKEN_ENV: &str = "ARENA_ADMIN_TOKEN";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("at least two backends are required, found {0}")]
    TooFewBackends(usize),
    #[error("duplicate model id {0}")]
    DuplicateModel(String),
    #[error("backend {0}: timeout must be positive")]
    ZeroTimeout(String),
    #[error("backend {0}: max_concurrent must be positive")]
    ZeroConcurrency(String),
    #[error("backend {0}: needs either base_url or a mock profile")]
    NoEndpoint(String),
    #[error("{0}")]
    Invalid(String),
}

/// One competing model and the endpoint that serves it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub model_id: String,
    #[serde(default)]
    pub display_name: Option<String>,
    /// Identifier of the serving endpoint; defaults to the model id.
    #[serde(default)]
    pub backend_id: Option<String>,
    #[serde(default)]
    pub base_url: Option<String>,
    /// Model name sent on the wire; defaults to the model id.
    #[serde(default)]
    pub model_name: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_concurrent")]
    pub max_concurrent: usize,
    #[serde(default = "yes")]
    pub active: bool,
    /// Serve this model from an in-process mock instead of HTTP.
    #[serde(default)]
    pub mock: Option<MockProfile>,
}

impl BackendConfig {
    pub fn mock(model_id: &str, profile: MockProfile) -> Self {
        Self {
            model_id: model_id.to_string(),
            display_name: None,
            backend_id: None,
            base_url: None,
            model_name: None,
            timeout_ms: default_timeout_ms(),
            max_concurrent: default_max_concurrent(),
            active: true,
            mock: Some(profile),
        }
    }

    pub fn display_name(&self) -> &str {
        self.display_name.as_deref().unwrap_or(&self.model_id)
    }

    pub fn backend_id(&self) -> &str {
        self.backend_id.as_deref().unwrap_or(&self.model_id)
    }

    pub fn model_name(&self) -> &str {
        self.model_name.as_deref().unwrap_or(&self.model_id)
    }
}

fn default_timeout_ms() -> u64 {
    120_000
}

fn default_max_concurrent() -> usize {
    8
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArenaConfig {
    pub seed: u64,
    pub storage_path: PathBuf,
    pub backends: Vec<BackendConfig>,
    pub sampling: SamplingDefaults,
    pub system_prompt_template: String,
    pub control_rate: f64,
    pub moderation: ModerationConfig,
    pub bootstrap_resamples: usize,
    pub confidence: f64,
    pub recompute_interval_secs: u64,
    /// Write a state snapshot every this many events (0 disables).
    pub snapshot_every: u64,
    pub max_turns: usize,
    pub max_message_chars: usize,
    pub balance_probability: f64,
    /// Read from `ARENA_ADMIN_TOKEN` when absent from the file.
    #[serde(skip_serializing)]
    pub admin_token: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingDefaults {
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for SamplingDefaults {
    fn default() -> Self {
        let s = SamplingConfig::default();
        Self {
            temperature: s.temperature,
            top_p: s.top_p,
        }
    }
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            storage_path: PathBuf::from("arena-data"),
            backends: Vec::new(),
            sampling: SamplingDefaults::default(),
            system_prompt_template: DEFAULT_SYSTEM_PROMPT.to_string(),
            control_rate: DEFAULT_CONTROL_RATE,
            moderation: ModerationConfig::default(),
            bootstrap_resamples: 1000,
            confidence: 0.90,
            recompute_interval_secs: 60,
            snapshot_every: 1000,
            max_turns: 20,
            max_message_chars: 8000,
            balance_probability: 0.5,
            admin_token: None,
        }
    }
}

impl ArenaConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ArenaConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads the file and fills the admin token from the environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.admin_token.is_none() {
            cfg.admin_token = std::env::var(ADMIN_TOKEN_ENV).ok().filter(|t| !t.is_empty());
        }
        Ok(cfg)
    }

    pub fn sampling_config(&self) -> SamplingConfig {
        SamplingConfig {
            temperature: self.sampling.temperature,
            top_p: self.sampling.top_p,
            system_prompt_template: self.system_prompt_template.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.backends.len() < 2 {
            return Err(ConfigError::TooFewBackends(self.backends.len()));
        }
        let mut seen = BTreeSet::new();
        for b in &self.backends {
            if !seen.insert(b.model_id.as_str()) {
                return Err(ConfigError::DuplicateModel(b.model_id.clone()));
            }
            if b.timeout_ms == 0 {
                return Err(ConfigError::ZeroTimeout(b.model_id.clone()));
            }
            if b.max_concurrent == 0 {
                return Err(ConfigError::ZeroConcurrency(b.model_id.clone()));
            }
            if b.base_url.is_none() && b.mock.is_none() {
                return Err(ConfigError::NoEndpoint(b.model_id.clone()));
            }
        }
        self.sampling_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.control_rate) {
            return Err(ConfigError::Invalid(format!(
                "control_rate {} outside [0, 1]",
                self.control_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.balance_probability) {
            return Err(ConfigError::Invalid(format!(
                "balance_probability {} outside [0, 1]",
                self.balance_probability
            )));
        }
        if !(0.0 < self.confidence && self.confidence < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "confidence {} outside (0, 1)",
                self.confidence
            )));
        }
        if self.max_turns == 0 || self.max_message_chars == 0 {
            return Err(ConfigError::Invalid("turn and message limits must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_MOCKS: &str = r#"
        seed = 7
        storage_path = "/tmp/arena"

        [[backends]]
        model_id = "alpha"
        mock = { quality = 0.5 }

        [[backends]]
        model_id = "beta"
        base_url = "http://127.0.0.1:9000"
        timeout_ms = 5000
        max_concurrent = 2
    "#;

    #[test]
    fn parses_defaults() {
        let cfg = ArenaConfig::from_toml(TWO_MOCKS).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.sampling.temperature, 0.9);
        assert_eq!(cfg.sampling.top_p, 0.95);
        assert_eq!(cfg.control_rate, 0.05);
        assert_eq!(cfg.recompute_interval_secs, 60);
        assert_eq!(cfg.backends[1].max_concurrent, 2);
        assert_eq!(cfg.backends[0].model_name(), "alpha");
    }

    #[test]
    fn one_backend_is_rejected() {
        let text = r#"
            [[backends]]
            model_id = "alpha"
            mock = {}
        "#;
        assert!(matches!(
            ArenaConfig::from_toml(text),
            Err(ConfigError::TooFewBackends(1))
        ));
    }

    #[test]
    fn duplicate_and_bad_values() {
        let dup = TWO_MOCKS.replace("\"beta\"", "\"alpha\"");
        assert!(matches!(ArenaConfig::from_toml(&dup), Err(ConfigError::DuplicateModel(_))));
        let zero = TWO_MOCKS.replace("timeout_ms = 5000", "timeout_ms = 0");
        assert!(matches!(ArenaConfig::from_toml(&zero), Err(ConfigError::ZeroTimeout(_))));
        let rate = format!("control_rate = 1.5\n{TWO_MOCKS}");
        assert!(matches!(ArenaConfig::from_toml(&rate), Err(ConfigError::Invalid(_))));
    }
}
