//! Token counting and context-window exclusion.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::promptlab::RenderedPrompt;

pub const DEFAULT_MAX_OUTPUT: usize = 200;
pub const DEFAULT_CHARS_PER_TOKEN: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EndpointKind {
    #[default]
    Chat,
    Completion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelProfile {
    pub name: String,
    pub context_limit: usize,
    pub temperature: f64,
    #[serde(default = "default_max_output")]
    pub max_output: usize,
    #[serde(default)]
    pub endpoint_kind: EndpointKind,
}

fn default_max_output() -> usize {
    DEFAULT_MAX_OUTPUT
}

/// Shipped profiles: `(name, context limit, temperature)`.
const BUILTIN_PROFILES: &[(&str, usize, f64)] = &[
    ("gpt-4-turbo", 128_000, 0.0),
    ("gpt-4o-mini", 128_000, 0.0),
    ("mixtral-8x7b-instruct", 32_768, 1e-5),
    ("mistral-7b-instruct", 32_768, 1e-5),
    ("llama-3-70b-instruct", 8_192, 1e-5),
    ("llama-3-8b-instruct", 8_192, 1e-5),
    ("flan-ul2", 2_048, 1e-5),
];

impl ModelProfile {
    pub fn new(name: impl Into<String>, context_limit: usize, temperature: f64) -> Self {
        ModelProfile {
            name: name.into(),
            context_limit,
            temperature,
            max_output: DEFAULT_MAX_OUTPUT,
            endpoint_kind: EndpointKind::Chat,
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        BUILTIN_PROFILES
            .iter()
            .find(|(n, _, _)| *n == name)
            .map(|&(n, limit, temp)| ModelProfile::new(n, limit, temp))
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN_PROFILES.iter().map(|(n, _, _)| *n)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.context_limit == 0 {
            return Err(format!("{}: context_limit must be positive", self.name));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(format!("{}: temperature must be >= 0", self.name));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BudgetError {
    #[error("remote tokenizer unavailable: {0}")]
    RemoteUnavailable(String),
}

/// How prompt length is measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TokenCounter {
    Approximate {
        #[serde(default = "default_ratio")]
        chars_per_token: f64,
    },
    /// A serving endpoint's `/tokenize` route (vLLM and llama.cpp style).
    Remote { url: String, model: String },
}

fn default_ratio() -> f64 {
    DEFAULT_CHARS_PER_TOKEN
}

impl Default for TokenCounter {
    fn default() -> Self {
        TokenCounter::Approximate {
            chars_per_token: DEFAULT_CHARS_PER_TOKEN,
        }
    }
}

impl fmt::Display for TokenCounter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenCounter::Approximate { chars_per_token } => {
                write!(f, "approximate({chars_per_token} chars/token)")
            }
            TokenCounter::Remote { url, .. } => write!(f, "remote({url})"),
        }
    }
}

impl TokenCounter {
    pub fn kind(&self) -> &'static str {
        match self {
            TokenCounter::Approximate { .. } => "approximate",
            TokenCounter::Remote { .. } => "remote",
        }
    }
}

#[derive(Deserialize)]
struct TokenizeResponse {
    count: Option<usize>,
    tokens: Option<Vec<serde_json::Value>>,
}

pub fn count_tokens(text: &str, counter: &TokenCounter) -> Result<usize, BudgetError> {
    match counter {
        TokenCounter::Approximate { chars_per_token } => {
            let chars = text.chars().count();
            Ok((chars as f64 / chars_per_token).ceil() as usize)
        }
        TokenCounter::Remote { url, model } => {
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(30))
                .build()
                .map_err(|e| BudgetError::RemoteUnavailable(e.to_string()))?;
            let body = serde_json::json!({ "model": model, "prompt": text, "content": text });
            let resp = client
                .post(url)
                .json(&body)
                .send()
                .and_then(|r| r.error_for_status())
                .map_err(|e| BudgetError::RemoteUnavailable(e.to_string()))?;
            let parsed: TokenizeResponse = resp.json().map_err(|e| BudgetError::RemoteUnavailable(e.to_string()))?;
            parsed
                .count
                .or(parsed.tokens.map(|t| t.len()))
                .ok_or_else(|| BudgetError::RemoteUnavailable("response has no count or tokens".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub prompt_id: String,
    pub model: String,
    pub measured_tokens: usize,
    pub limit: usize,
    pub counter_kind: String,
}

#[derive(Debug, Clone, Default)]
pub struct BudgetOutcome {
    pub kept: Vec<RenderedPrompt>,
    pub excluded: Vec<Exclusion>,
}

/// Keeps a prompt iff its token count plus the output reservation fits the
/// context window. Input order is preserved on both sides.
pub fn filter_by_budget(
    prompts: &[RenderedPrompt],
    profile: &ModelProfile,
    counter: &TokenCounter,
) -> Result<BudgetOutcome, BudgetError> {
    let mut outcome = BudgetOutcome::default();
    for prompt in prompts {
        let measured = count_tokens(&prompt.text, counter)?;
        if measured + profile.max_output <= profile.context_limit {
            outcome.kept.push(prompt.clone());
        } else {
            outcome.excluded.push(Exclusion {
                prompt_id: prompt.prompt_id.clone(),
                model: profile.name.clone(),
                measured_tokens: measured,
                limit: profile.context_limit,
                counter_kind: counter.to_string(),
            });
        }
    }
    Ok(outcome)
}
