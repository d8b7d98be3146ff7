use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionBackend, CompletionRequest, Embedder};
use crate::refine::EmbeddingVector;

pub const ENV_API_BASE: &str = "RIPPLECOT_API_BASE";
pub const ENV_API_KEY: &str = "RIPPLECOT_API_KEY";
pub const ENV_EMBED_MODEL: &str = "RIPPLECOT_EMBED_MODEL";
pub const ENV_CHAT_MODEL: &str = "RIPPLECOT_CHAT_MODEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    pub chat_model: String,
    pub embed_model: String,
    pub timeout: Duration,
    /// Delay before the single retry of a retryable status.
    pub backoff: Duration,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: None,
            chat_model: "gpt-3.5-turbo".into(),
            embed_model: "all-MiniLM-L6-v2".into(),
            timeout: Duration::from_secs(60),
            backoff: Duration::from_millis(500),
            max_in_flight: 4,
        }
    }

    /// Reads the `RIPPLECOT_*` variables; the base URL is required.
    pub fn from_env() -> Result<Self, BackendError> {
        let base =
            std::env::var(ENV_API_BASE).map_err(|_| BackendError::Unavailable(format!("{ENV_API_BASE} is not set")))?;
        let mut cfg = Self::new(base);
        cfg.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        if let Ok(m) = std::env::var(ENV_CHAT_MODEL) {
            cfg.chat_model = m;
        }
        if let Ok(m) = std::env::var(ENV_EMBED_MODEL) {
            cfg.embed_model = m;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct ChatMessage {
    role: String,
    content: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct ChatRequest {
    model: String,
    messages: Vec<ChatMessage>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    stop: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct EmbeddingRequest {
    model: String,
    input: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|p| p.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|p| p.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Blocking client for OpenAI-compatible `chat/completions` and
/// `embeddings` endpoints.
#[derive(Debug)]
pub struct RemoteClient {
    cfg: RemoteConfig,
    http: reqwest::blocking::Client,
    gate: Gate,
    requests: AtomicU64,
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

impl RemoteClient {
    pub fn new(cfg: RemoteConfig) -> Result<Self, BackendError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let gate = Gate::new(cfg.max_in_flight);
        Ok(Self { cfg, http, gate, requests: AtomicU64::new(0) })
    }

    pub fn from_env() -> Result<Self, BackendError> {
        Self::new(RemoteConfig::from_env()?)
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    fn send_once<B: Serialize>(&self, url: &str, body: &B) -> Result<String, BackendError> {
        let _permit = self.gate.acquire();
        self.requests.fetch_add(1, Ordering::Relaxed);
        let mut req = self.http.post(url).json(body);
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| self.transport(e))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| self.transport(e))?;
        if (200..300).contains(&status) {
            Ok(text)
        } else {
            Err(BackendError::Http { status, retryable: retryable(status), body: text })
        }
    }

    fn transport(&self, e: reqwest::Error) -> BackendError {
        if e.is_timeout() {
            BackendError::Timeout(self.cfg.timeout)
        } else {
            BackendError::Transport(e.to_string())
        }
    }

    /// One retry after `backoff` for 429/5xx, then the error surfaces.
    fn post<B: Serialize>(&self, path: &str, body: &B) -> Result<String, BackendError> {
        let url = format!("{}/{}", self.cfg.base_url, path);
        match self.send_once(&url, body) {
            Err(e) if e.is_retryable() => {
                log::warn!("{url}: {e}; retrying once");
                std::thread::sleep(self.cfg.backoff);
                self.send_once(&url, body)
            }
            other => other,
        }
    }
}

impl CompletionBackend for RemoteClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        request.validate()?;
        let body = ChatRequest {
            model: self.cfg.chat_model.clone(),
            messages: vec![ChatMessage { role: "user".into(), content: request.prompt.clone() }],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            stop: request.stop.clone(),
            seed: request.seed,
        };
        let text = self.post("chat/completions", &body)?;
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| BackendError::Decode(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::Decode("response has no choices".into()))
    }

    fn identity(&self) -> String {
        format!("remote/{}/{}", self.cfg.base_url, self.cfg.chat_model)
    }

    fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }
}

impl Embedder for RemoteClient {
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, BackendError> {
        if texts.is_empty() {
            return Err(BackendError::EmptyInput);
        }
        let body = EmbeddingRequest {
            model: self.cfg.embed_model.clone(),
            input: texts.iter().map(|t| t.to_string()).collect(),
        };
        let text = self.post("embeddings", &body)?;
        let mut parsed: EmbeddingResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Decode(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(BackendError::Decode(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }
        if parsed.data.iter().all(|d| d.index.is_some()) {
            parsed.data.sort_by_key(|d| d.index);
        }
        let dim = parsed.data[0].embedding.len();
        parsed
            .data
            .into_iter()
            .enumerate()
            .map(|(index, d)| {
                if d.embedding.len() != dim {
                    return Err(BackendError::Decode(format!(
                        "embedding {index} has dimension {}, expected {dim}",
                        d.embedding.len()
                    )));
                }
                if d.embedding.iter().all(|v| *v == 0.0) {
                    return Err(BackendError::ZeroVector { index });
                }
                EmbeddingVector::new(d.embedding).map_err(|e| BackendError::Decode(e.to_string()))
            })
            .collect()
    }

    fn identity(&self) -> String {
        format!("remote/{}/{}", self.cfg.base_url, self.cfg.embed_model)
    }
}
