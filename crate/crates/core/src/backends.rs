//! Completion backends: an OpenAI-compatible HTTP client and a replay
//! backend that serves recorded completions from a fixture file.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize};
use url::Url;

use crate::budget::{EndpointKind, ModelProfile};
use crate::jsonl;
use crate::promptlab::RenderedPrompt;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("backend exhausted retries (last status {})", last_status.map(|s| s.to_string()).unwrap_or_else(|| "none".into()))]
    BackendExhausted { last_status: Option<u16>, message: String },
    #[error("request timed out")]
    Timeout,
    #[error("authentication failed ({0})")]
    AuthFailure(String),
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no fixture entry for prompt {0}")]
    MissingFixture(String),
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("fixture: {0}")]
    Fixture(#[from] jsonl::ReadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// One recorded completion. Empty `raw_text` is a valid outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub prompt_id: String,
    #[serde(default = "replay_model")]
    pub model: String,
    pub raw_text: String,
    #[serde(default = "stop")]
    pub finish_reason: String,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default)]
    pub usage: Option<Usage>,
    #[serde(default = "first_attempt")]
    pub attempt: u32,
    #[serde(default = "epoch")]
    pub timestamp: DateTime<Utc>,
}

fn replay_model() -> String {
    "replay".into()
}
fn stop() -> String {
    "stop".into()
}
fn first_attempt() -> u32 {
    1
}
fn epoch() -> DateTime<Utc> {
    DateTime::<Utc>::UNIX_EPOCH
}

pub trait Backend: Send + Sync {
    fn model(&self) -> &str;
    fn complete(&self, prompt: &RenderedPrompt) -> Result<CompletionRecord, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    /// A full profile or the name of a shipped one.
    #[serde(deserialize_with = "profile_or_name")]
    pub profile: ModelProfile,
    pub base_url: String,
    /// Model identifier sent on the wire; defaults to the profile name.
    #[serde(default)]
    pub model_id: Option<String>,
    /// Environment variable holding the bearer token. `None` sends no auth.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_base_delay")]
    pub retry_base_delay_secs: f64,
    #[serde(default)]
    pub requests_per_second: Option<f64>,
}

fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    5
}
fn default_base_delay() -> f64 {
    1.0
}

fn profile_or_name<'de, D: Deserializer<'de>>(d: D) -> Result<ModelProfile, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Spec {
        Name(String),
        Full(ModelProfile),
    }
    match Spec::deserialize(d)? {
        Spec::Full(p) => Ok(p),
        Spec::Name(n) => {
            ModelProfile::builtin(&n).ok_or_else(|| serde::de::Error::custom(format!("unknown model profile {n:?}")))
        }
    }
}

impl BackendConfig {
    pub fn new(profile: ModelProfile, base_url: impl Into<String>) -> Self {
        BackendConfig {
            profile,
            base_url: base_url.into(),
            model_id: None,
            api_key_env: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            retry_base_delay_secs: default_base_delay(),
            requests_per_second: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        self.profile.validate().map_err(BackendError::Config)?;
        let url = Url::parse(&self.base_url).map_err(|e| BackendError::Config(format!("base_url: {e}")))?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(BackendError::Config(format!(
                "base_url scheme {} unsupported",
                url.scheme()
            )));
        }
        if self.timeout_secs.is_nan()
            || self.timeout_secs <= 0.0
            || self.retry_base_delay_secs.is_nan()
            || self.retry_base_delay_secs < 0.0
        {
            return Err(BackendError::Config("timeout and retry delay must be positive".into()));
        }
        Ok(())
    }

    fn wire_model(&self) -> &str {
        self.model_id.as_deref().unwrap_or(&self.profile.name)
    }

    pub fn endpoint(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        match self.profile.endpoint_kind {
            EndpointKind::Chat => format!("{base}/chat/completions"),
            EndpointKind::Completion => format!("{base}/completions"),
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
#[serde(untagged)]
enum RequestBody<'a> {
    Chat {
        model: &'a str,
        messages: [ChatMessage<'a>; 1],
        temperature: f64,
        max_tokens: usize,
    },
    Completion {
        model: &'a str,
        prompt: &'a str,
        temperature: f64,
        max_tokens: usize,
    },
}

/// Serialized request body. A pure function of config and prompt.
pub fn request_body(config: &BackendConfig, prompt: &RenderedPrompt) -> Vec<u8> {
    let model = config.wire_model();
    let temperature = config.profile.temperature;
    let max_tokens = config.profile.max_output;
    let body = match config.profile.endpoint_kind {
        EndpointKind::Chat => RequestBody::Chat {
            model,
            messages: [ChatMessage {
                role: "user",
                content: &prompt.text,
            }],
            temperature,
            max_tokens,
        },
        EndpointKind::Completion => RequestBody::Completion {
            model,
            prompt: &prompt.text,
            temperature,
            max_tokens,
        },
    };
    serde_json::to_vec(&body).expect("request body serializes")
}

#[derive(Deserialize)]
struct ResponseBody {
    choices: Vec<Choice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Option<ResponseMessage>,
    text: Option<String>,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

/// Token bucket of one token, refilled at a fixed rate. The next free slot
/// is a single atomic timestamp, so concurrent callers never share a lock.
#[derive(Debug)]
pub struct RateLimiter {
    origin: Instant,
    interval_nanos: u64,
    next_free: AtomicU64,
}

impl RateLimiter {
    pub fn per_second(rate: f64) -> Self {
        RateLimiter {
            origin: Instant::now(),
            interval_nanos: (1e9 / rate.max(1e-9)) as u64,
            next_free: AtomicU64::new(0),
        }
    }

    /// Reserves the next slot and returns how long the caller must wait.
    pub fn reserve(&self) -> Duration {
        let now = self.origin.elapsed().as_nanos() as u64;
        let mut current = self.next_free.load(Ordering::Acquire);
        loop {
            let slot = current.max(now);
            match self.next_free.compare_exchange_weak(
                current,
                slot + self.interval_nanos,
                Ordering::AcqRel,
                Ordering::Acquire,
            ) {
                Ok(_) => return Duration::from_nanos(slot - now),
                Err(actual) => current = actual,
            }
        }
    }

    pub fn acquire(&self) {
        let wait = self.reserve();
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    limiter: Option<RateLimiter>,
}

enum Attempt {
    Done(CompletionRecord),
    Retry(Option<u16>, String, bool),
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| BackendError::AuthFailure(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let limiter = config.requests_per_second.map(RateLimiter::per_second);
        Ok(HttpBackend {
            config,
            client,
            api_key,
            limiter,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.config.retry_base_delay_secs * 2f64.powi(attempt as i32 - 1);
        let jitter = rand::rng().random_range(0.5..=1.0);
        Duration::from_secs_f64((base * jitter).min(60.0))
    }

    fn attempt(&self, prompt: &RenderedPrompt, attempt: u32) -> Result<Attempt, BackendError> {
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        let mut req = self
            .client
            .post(self.config.endpoint())
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(request_body(&self.config, prompt));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let started = Instant::now();
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Ok(Attempt::Retry(None, e.to_string(), true)),
            Err(e) => return Ok(Attempt::Retry(None, e.to_string(), false)),
        };
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => {
                return Err(BackendError::AuthFailure(format!("status {status}")));
            }
            429 | 500..=599 => {
                let body = resp.text().unwrap_or_default();
                return Ok(Attempt::Retry(Some(status), body, false));
            }
            _ => {
                let body = resp.text().unwrap_or_default();
                return Err(BackendError::Rejected { status, body });
            }
        }
        let body: ResponseBody = match resp.json() {
            Ok(b) => b,
            Err(e) if e.is_timeout() => return Ok(Attempt::Retry(None, e.to_string(), true)),
            Err(e) => return Err(BackendError::MalformedResponse(e.to_string())),
        };
        let choice = body
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::MalformedResponse("no choices".into()))?;
        let raw_text = choice
            .message
            .and_then(|m| m.content)
            .or(choice.text)
            .unwrap_or_default();
        Ok(Attempt::Done(CompletionRecord {
            prompt_id: prompt.prompt_id.clone(),
            model: self.config.profile.name.clone(),
            raw_text,
            finish_reason: choice.finish_reason.unwrap_or_default(),
            latency_ms: started.elapsed().as_millis() as u64,
            usage: body.usage,
            attempt,
            timestamp: Utc::now(),
        }))
    }
}

impl Backend for HttpBackend {
    fn model(&self) -> &str {
        &self.config.profile.name
    }

    /// Sends the prompt as a single user message, retrying rate limits,
    /// server errors, timeouts and transport failures with exponential
    /// backoff and jitter. Authentication failures are never retried.
    fn complete(&self, prompt: &RenderedPrompt) -> Result<CompletionRecord, BackendError> {
        let attempts = self.config.max_retries + 1;
        let mut last = (None, String::new(), false);
        for attempt in 1..=attempts {
            match self.attempt(prompt, attempt)? {
                Attempt::Done(record) => return Ok(record),
                Attempt::Retry(status, message, timed_out) => {
                    last = (status, message, timed_out);
                    if attempt < attempts {
                        std::thread::sleep(self.backoff(attempt));
                    }
                }
            }
        }
        match last {
            (None, _, true) => Err(BackendError::Timeout),
            (last_status, message, _) => Err(BackendError::BackendExhausted { last_status, message }),
        }
    }
}

/// Serves stored completions keyed by prompt id. Never touches the network.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    model: String,
    records: HashMap<String, CompletionRecord>,
}

impl ReplayBackend {
    pub fn from_records(model: impl Into<String>, records: impl IntoIterator<Item = CompletionRecord>) -> Self {
        ReplayBackend {
            model: model.into(),
            records: records.into_iter().map(|r| (r.prompt_id.clone(), r)).collect(),
        }
    }

    pub fn from_file(model: impl Into<String>, path: &Path) -> Result<Self, BackendError> {
        let records: Vec<CompletionRecord> = jsonl::read_all(path)?;
        Ok(Self::from_records(model, records))
    }

    pub fn replay(&self, prompt_id: &str) -> Result<CompletionRecord, BackendError> {
        self.records
            .get(prompt_id)
            .cloned()
            .ok_or_else(|| BackendError::MissingFixture(prompt_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &RenderedPrompt) -> Result<CompletionRecord, BackendError> {
        self.replay(&prompt.prompt_id)
    }
}

/// Looks one record up in a completion fixture file.
pub fn replay(fixture: &Path, prompt_id: &str) -> Result<CompletionRecord, BackendError> {
    ReplayBackend::from_file("replay", fixture)?.replay(prompt_id)
}
