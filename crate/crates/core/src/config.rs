//! Pipeline configuration. Serialized as the JSON config file accepted by
//! the CLI; every field has a default so partial files are fine.

use serde::{Deserialize, Serialize};

/// Hearst-style is-a templates evaluated by the lightweight model.
pub const DEFAULT_TEMPLATES: [&str; 5] = [
    "<query> is a/an <anchor>",
    "<query> is a kind of <anchor>",
    "<query> is a type of <anchor>",
    "<query> is an example of <anchor>",
    "<anchor> such as <query>",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mutuality {
    /// Drop anchor `a` from `q`'s list when the reverse direction scores
    /// strictly higher.
    #[default]
    ReciprocalPrune,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatProvider {
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Model used for definition refinement, ranking and calibration.
    pub large_model: String,
    /// Model used for per-template is-a judgments.
    pub small_model: String,
    pub max_output_tokens: u32,
}

impl Default for ChatProvider {
    fn default() -> Self {
        ChatProvider {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            large_model: "gpt-4o".into(),
            small_model: "qwen3-4b".into(),
            max_output_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingProvider {
    pub base_url: String,
    pub api_key_env: String,
    pub model: String,
    pub batch_size: usize,
}

impl Default for EmbeddingProvider {
    fn default() -> Self {
        EmbeddingProvider {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            model: "all-mpnet-base-v2".into(),
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub k_isa: usize,
    pub k_def: usize,
    /// Defaults to `k_isa + k_def` when absent.
    pub k1: Option<usize>,
    pub k2: usize,
    /// Tolerance margin for skip-level support.
    pub delta: f64,
    /// Mutual-edge threshold.
    pub tau_m: f64,
    pub templates: Vec<String>,
    pub enable_hpcs: bool,
    pub enable_lscsf: bool,
    pub mutuality: Mutuality,
    pub chat: ChatProvider,
    pub embedding: EmbeddingProvider,
    pub seed: u64,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub retry_base_ms: u64,
    pub request_timeout_secs: u64,
    /// Word budget requested from the refiner.
    pub definition_words: usize,
    /// Hard truncation applied to refined definitions.
    pub definition_word_cap: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k_isa: 10,
            k_def: 5,
            k1: None,
            k2: 3,
            delta: 0.05,
            tau_m: 0.05,
            templates: DEFAULT_TEMPLATES.iter().map(|s| s.to_string()).collect(),
            enable_hpcs: true,
            enable_lscsf: true,
            mutuality: Mutuality::ReciprocalPrune,
            chat: ChatProvider::default(),
            embedding: EmbeddingProvider::default(),
            seed: 0,
            max_in_flight: 4,
            max_retries: 3,
            retry_base_ms: 500,
            request_timeout_secs: 60,
            definition_words: 60,
            definition_word_cap: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid config: {0}")]
pub struct ConfigError(pub String);

impl PipelineConfig {
    pub fn k1(&self) -> usize {
        self.k1.unwrap_or(self.k_isa + self.k_def)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: &str| Err(ConfigError(m.to_string()));
        if self.k_isa == 0 || self.k_def == 0 || self.k1() == 0 || self.k2 == 0 {
            return err("k_isa, k_def, k1 and k2 must be positive");
        }
        if self.k2 > self.k1() {
            return err("k2 must not exceed k1");
        }
        if self.templates.is_empty() {
            return err("template set is empty");
        }
        for t in &self.templates {
            if t.matches("<query>").count() != 1 || t.matches("<anchor>").count() != 1 {
                return err(&format!("template {t:?} must contain <query> and <anchor> exactly once"));
            }
        }
        for (name, v) in [("delta", self.delta), ("tau_m", self.tau_m)] {
            if !v.is_finite() || v < 0.0 {
                return err(&format!("{name} must be finite and non-negative"));
            }
        }
        if self.max_in_flight == 0 {
            return err("max_in_flight must be positive");
        }
        if self.definition_words == 0 || self.definition_word_cap < self.definition_words {
            return err("definition_word_cap must be at least definition_words (> 0)");
        }
        Ok(())
    }
}
