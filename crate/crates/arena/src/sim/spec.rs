use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read spec {0}: {1}")]
    Read(String, std::io::Error),
    #[error("invalid spec: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid spec: {0}")]
    Invalid(String),
}

/// Ground-truth strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthSpec {
    /// `n_models` values evenly spaced over `[-half_width, half_width]`.
    Spread { half_width: f64 },
    Explicit { theta: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotatorConfig {
    pub tie_rate: f64,
    pub noise: f64,
    /// Share of decisive judgments where content and language disagree and
    /// the overall question settles it.
    pub contradiction_rate: f64,
    pub second_turn_rate: f64,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self {
            tie_rate: 0.15,
            noise: 0.05,
            contradiction_rate: 0.1,
            second_turn_rate: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpammerConfig {
    /// Share of participants that are spammers, split evenly over the
    /// position, rate and control behaviours.
    pub fraction: f64,
    /// Battles a spammer plays relative to an honest participant.
    pub activity_weight: f64,
}

impl Default for SpammerConfig {
    fn default() -> Self {
        Self {
            fraction: 0.1,
            activity_weight: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimBackendConfig {
    pub failure_rate: f64,
    pub latency_ms: u64,
    pub timeout_ms: u64,
    pub max_concurrent: usize,
}

impl Default for SimBackendConfig {
    fn default() -> Self {
        Self {
            failure_rate: 0.0,
            latency_ms: 0,
            timeout_ms: 120_000,
            max_concurrent: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub seed: u64,
    pub n_models: usize,
    pub n_battles: usize,
    pub n_participants: usize,
    pub truth: TruthSpec,
    pub annotator: AnnotatorConfig,
    pub spammers: SpammerConfig,
    pub backend: SimBackendConfig,
    pub control_rate: f64,
    pub bootstrap_resamples: usize,
    pub balance_probability: f64,
    pub snapshot_every: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self::standard()
    }
}

impl ExperimentSpec {
    /// 21 models, 12,890 battles, 200 participants of which 10% spammers.
    pub fn standard() -> Self {
        Self {
            seed: 1,
            n_models: 21,
            n_battles: 12_890,
            n_participants: 200,
            truth: TruthSpec::Spread { half_width: 0.5825 },
            annotator: AnnotatorConfig::default(),
            spammers: SpammerConfig::default(),
            backend: SimBackendConfig::default(),
            control_rate: 0.05,
            bootstrap_resamples: 1000,
            balance_probability: 0.5,
            snapshot_every: 5000,
        }
    }

    /// The standard run without spammers.
    pub fn honest() -> Self {
        Self {
            spammers: SpammerConfig {
                fraction: 0.0,
                ..SpammerConfig::default()
            },
            ..Self::standard()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, SpecError> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SpecError::Read(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let bad = |m: String| Err(SpecError::Invalid(m));
        if self.n_models < 2 {
            return bad(format!("need at least 2 models, got {}", self.n_models));
        }
        if self.n_participants == 0 {
            return bad("need at least one participant".into());
        }
        if let TruthSpec::Explicit { theta } = &self.truth {
            if theta.len() != self.n_models {
                return bad(format!("{} truth values for {} models", theta.len(), self.n_models));
            }
        }
        let a = &self.annotator;
        if !(0.0..1.0).contains(&a.tie_rate) {
            return bad(format!("tie_rate {} outside [0, 1)", a.tie_rate));
        }
        for (name, v) in [
            ("noise", a.noise),
            ("contradiction_rate", a.contradiction_rate),
            ("second_turn_rate", a.second_turn_rate),
            ("spammers.fraction", self.spammers.fraction),
            ("backend.failure_rate", self.backend.failure_rate),
            ("control_rate", self.control_rate),
            ("balance_probability", self.balance_probability),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if self.spammers.activity_weight <= 0.0 {
            return bad("spammers.activity_weight must be positive".into());
        }
        Ok(())
    }

    /// True strengths, in model order.
    pub fn truth(&self) -> Vec<f64> {
        match &self.truth {
            TruthSpec::Explicit { theta } => theta.clone(),
            TruthSpec::Spread { half_width } => {
                let k = self.n_models;
                (0..k)
                    .map(|i| -half_width + 2.0 * half_width * i as f64 / (k - 1) as f64)
                    .collect()
            }
        }
    }

    pub fn model_id(i: usize) -> String {
        format!("m{i:02}")
    }

    pub fn n_spammers(&self) -> usize {
        (self.n_participants as f64 * self.spammers.fraction).round() as usize
    }
}
