//! Completion and embedding providers: the contracts, a deterministic
//! hashed bag-of-words embedder, scripted and oracle completion backends,
//! and an HTTP client for OpenAI-compatible endpoints.

mod hashed;
mod oracle;
mod remote;
mod scripted;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::refine::EmbeddingVector;

pub use hashed::{HashedBowEmbedder, DEFAULT_BUCKETS};
pub use oracle::{
    is_self_check_prompt, oracle_answer, KnowledgeGraph, OracleBackend, OracleConfig, OracleError, Overlay,
    QuestionPath, UNKNOWN_ANSWER,
};
pub use remote::{RemoteClient, RemoteConfig, ENV_API_BASE, ENV_API_KEY, ENV_CHAT_MODEL, ENV_EMBED_MODEL};
pub use scripted::ScriptedBackend;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("http status {status}{}: {body}", if *retryable { " (retryable)" } else { "" })]
    Http { status: u16, retryable: bool, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("text {index} has no tokens to embed")]
    ZeroVector { index: usize },
    #[error("empty input batch")]
    EmptyInput,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("scripted transcript exhausted after {calls} calls")]
    ScriptExhausted { calls: usize },
    #[error("backend unavailable: {0}")]
    Unavailable(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Http { retryable: true, .. })
    }
}

/// One completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CompletionRequest {
    pub const DEFAULT_MAX_TOKENS: u32 = 512;

    /// Greedy decoding with the default token budget.
    pub fn new(prompt: impl Into<String>) -> Self {
        Self { prompt: prompt.into(), max_tokens: Self::DEFAULT_MAX_TOKENS, temperature: 0.0, stop: None, seed: None }
    }

    /// Same settings, different prompt.
    pub fn for_prompt(&self, prompt: impl Into<String>) -> Self {
        Self { prompt: prompt.into(), ..self.clone() }
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_stop(mut self, stop: Vec<String>) -> Self {
        self.stop = Some(stop);
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} must be finite and non-negative",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Text completion provider. Implementations are shareable across threads.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;

    /// Stable description recorded in run metadata.
    fn identity(&self) -> String;

    /// Completion calls issued so far.
    fn request_count(&self) -> u64 {
        0
    }
}

/// Text embedding provider. Every vector in one batch shares a dimension.
pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError>;

    fn identity(&self) -> String;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for &T {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }

    fn identity(&self) -> String {
        (**self).identity()
    }

    fn request_count(&self) -> u64 {
        (**self).request_count()
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }

    fn identity(&self) -> String {
        (**self).identity()
    }

    fn request_count(&self) -> u64 {
        (**self).request_count()
    }
}

impl<T: Embedder + ?Sized> Embedder for std::sync::Arc<T> {
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
        (**self).embed(texts)
    }

    fn identity(&self) -> String {
        (**self).identity()
    }
}
