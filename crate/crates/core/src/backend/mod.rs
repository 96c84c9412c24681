//! The seam between the engine and any language model.
//!
//! Four roles go through a [`Backend`]: relevance scoring, agent ranking,
//! thought/action generation and text embedding. Callers render their own
//! prompts; the backend only moves text. [`MockBackend`] answers every role
//! deterministically from a seed, [`HttpBackend`] forwards to a generic
//! chat-completions endpoint.

mod http;
mod mock;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::HttpBackend;
pub use mock::MockBackend;

/// Environment variable overriding the HTTP endpoint.
pub const ENDPOINT_ENV: &str = "IRV_BACKEND_ENDPOINT";
/// Environment variable carrying a bearer token for the HTTP endpoint.
pub const API_KEY_ENV: &str = "IRV_BACKEND_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Scorer,
    Ranker,
    Generator,
    Embedder,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Scorer => "scorer",
            Role::Ranker => "ranker",
            Role::Generator => "generator",
            Role::Embedder => "embedder",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("{role} request {prompt_hash} failed: {message}")]
    Transport {
        role: Role,
        prompt_hash: String,
        message: String,
    },
    #[error("{role} request {prompt_hash} returned an unusable reply: {message}")]
    InvalidReply {
        role: Role,
        prompt_hash: String,
        message: String,
    },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Short hex digest of a prompt, used to correlate log lines with requests.
pub fn prompt_hash(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

/// Stable 64-bit hash of `text` under `seed`, separated by `domain`.
pub fn seeded_hash(seed: u64, domain: &str, text: &str) -> u64 {
    let bytes = seeded_digest(seed, domain, text);
    u64::from_le_bytes(bytes[..8].try_into().expect("digest has 32 bytes"))
}

pub(crate) fn seeded_digest(seed: u64, domain: &str, text: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(domain.as_bytes());
    hasher.update([0u8]);
    hasher.update(text.as_bytes());
    hasher.finalize().into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub prompt: String,
}

/// One agent as presented to the ranker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub agent: String,
    pub action: String,
    pub balance: i64,
    pub goal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRequest {
    pub prompt: String,
    pub entries: Vec<RankEntry>,
    pub topic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub prompt: String,
    /// The reduced action space, in preference order.
    pub actions: Vec<String>,
}

pub trait Backend: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError>;
    /// Raw reply expected to contain a decimal score.
    fn score(&self, request: &ScoreRequest) -> Result<String, BackendError>;
    /// Raw reply expected to list agent ids, most conducive first.
    fn rank(&self, request: &RankRequest) -> Result<String, BackendError>;
    /// Raw reply with `Thought:` and `Action:` sections.
    fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError>;

    /// Upper bound on requests a caller may have in flight at once.
    fn max_concurrency(&self) -> usize {
        1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    #[default]
    Mock,
    Http,
}

impl std::str::FromStr for BackendMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(Self::Mock),
            "http" => Ok(Self::Http),
            other => Err(format!("unknown backend mode {other:?} (expected mock or http)")),
        }
    }
}

/// Model name per role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoleModels {
    pub scorer: String,
    pub ranker: String,
    pub generator: String,
    pub embedder: String,
}

impl Default for RoleModels {
    fn default() -> Self {
        Self {
            scorer: "llama-3.1-8b".into(),
            ranker: "llama-3.1-8b".into(),
            generator: "gpt-4o".into(),
            embedder: "text-embedding".into(),
        }
    }
}

impl RoleModels {
    pub fn for_role(&self, role: Role) -> &str {
        match role {
            Role::Scorer => &self.scorer,
            Role::Ranker => &self.ranker,
            Role::Generator => &self.generator,
            Role::Embedder => &self.embedder,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub mode: BackendMode,
    /// Chat-completions URL (http mode).
    pub endpoint: Option<String>,
    /// Optional embedding URL; without it the hashed embedder is used locally.
    pub embed_endpoint: Option<String>,
    pub models: RoleModels,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub max_concurrency: usize,
    pub seed: Option<u64>,
    pub embedding_dimension: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            mode: BackendMode::Mock,
            endpoint: None,
            embed_endpoint: None,
            models: RoleModels::default(),
            timeout_secs: 60,
            max_retries: 2,
            max_concurrency: 4,
            seed: Some(0),
            embedding_dimension: 384,
        }
    }
}

impl BackendConfig {
    /// Applies endpoint overrides from the environment.
    pub fn apply_env(&mut self) {
        if let Ok(endpoint) = std::env::var(ENDPOINT_ENV) {
            if !endpoint.is_empty() {
                self.endpoint = Some(endpoint);
            }
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.embedding_dimension == 0 {
            return Err(BackendError::Config("embedding_dimension must be positive".into()));
        }
        match self.mode {
            BackendMode::Http if self.endpoint.as_deref().is_none_or(str::is_empty) => Err(
                BackendError::Config("http mode requires an endpoint".into()),
            ),
            BackendMode::Mock if self.seed.is_none() => {
                Err(BackendError::Config("mock mode requires a seed".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Builds the backend described by `config`.
pub fn from_config(config: &BackendConfig) -> Result<Arc<dyn Backend>, BackendError> {
    config.validate()?;
    Ok(match config.mode {
        BackendMode::Mock => Arc::new(MockBackend::new(
            config.seed.unwrap_or_default(),
            config.embedding_dimension,
        )),
        BackendMode::Http => Arc::new(HttpBackend::new(config)?),
    })
}
