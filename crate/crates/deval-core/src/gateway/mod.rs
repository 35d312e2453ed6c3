//! Uniform access to models under test: a remote chat-completions client plus
//! deterministic built-in models that keep the whole harness testable offline.

mod builtin;
mod http;

pub use builtin::{resolve_model, OracleModel, ScriptedModel, StubbornModel};
pub use http::HttpModel;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dr;

/// Who produced a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One turn of a chat dialogue. Images ride only on user messages and hold a
/// raw PPM payload (base64-encoded on the wire and on disk).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::b64::opt")]
    pub image: Option<Vec<u8>>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, text: text.into(), image: None }
    }

    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, text: text.into(), image: None }
    }

    pub fn user_with_image(text: impl Into<String>, image: Vec<u8>) -> Self {
        ChatMessage { role: Role::User, text: text.into(), image: Some(image) }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, text: text.into(), image: None }
    }
}

/// Retry behavior for transient transport failures.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, backoff_base: Duration::from_millis(500) }
    }
}

/// Everything needed to talk to one model.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Majority-vote width: completions drawn per turn.
    pub samples_k: u32,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub rate_limit_rps: f64,
    /// Bearer credential; comes from the environment, never from config files.
    pub api_key: Option<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            endpoint_url: String::new(),
            model_name: String::new(),
            temperature: 0.0,
            max_tokens: 1024,
            samples_k: 1,
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
            rate_limit_rps: 5.0,
            api_key: None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.samples_k < 1 {
            return Err(GatewayError::BadConfig("samples_k must be at least 1"));
        }
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::BadConfig("temperature must be nonnegative"));
        }
        if self.max_tokens < 1 {
            return Err(GatewayError::BadConfig("max_tokens must be positive"));
        }
        if !(self.rate_limit_rps > 0.0) {
            return Err(GatewayError::BadConfig("rate_limit_rps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("chat history is empty")]
    EmptyHistory,
    #[error("bad chat history: {0}")]
    BadHistory(&'static str),
    #[error("bad model config: {0}")]
    BadConfig(&'static str),
    #[error("API key not set (expected in env DEVAL_API_KEY)")]
    MissingApiKey,
    #[error("transport failure after {attempts} attempts: {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Protocol(String),
    #[error("script problem: {0}")]
    Script(String),
    #[error("oracle could not read the prompt: {0}")]
    OraclePrompt(String),
}

/// A model under test. Implementations must be safe to call from many worker
/// threads at once.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    /// Complete the next assistant turn. History must be nonempty, end with a
    /// user message, and carry system messages only in front.
    fn complete_chat(
        &self,
        history: &[ChatMessage],
        cfg: &ModelConfig,
    ) -> Result<String, GatewayError>;

    /// True when replies depend only on the history. Lets the runner drop
    /// wall-clock metadata so reruns are byte-identical.
    fn deterministic(&self) -> bool {
        false
    }
}

pub(crate) fn validate_history(history: &[ChatMessage]) -> Result<(), GatewayError> {
    if history.is_empty() {
        return Err(GatewayError::EmptyHistory);
    }
    if history.last().map(|m| m.role) != Some(Role::User) {
        return Err(GatewayError::BadHistory("history must end with a user message"));
    }
    for (i, msg) in history.iter().enumerate() {
        if msg.role == Role::System && i != 0 {
            return Err(GatewayError::BadHistory("system message after the first turn"));
        }
        if msg.image.is_some() && msg.role != Role::User {
            return Err(GatewayError::BadHistory("image on a non-user message"));
        }
    }
    Ok(())
}

/// Draw `samples_k` completions and majority-vote their answer normal forms
/// (ties break to the lexicographically smallest form). Returns the full text
/// of the first completion whose normal form equals the winner.
///
/// `normal_form` maps a raw completion to the string that gets voted on —
/// typically parse-then-rerender from the eval runner.
pub fn sample_majority(
    model: &dyn Model,
    history: &[ChatMessage],
    cfg: &ModelConfig,
    normal_form: &dyn Fn(&str) -> String,
) -> Result<String, GatewayError> {
    cfg.validate()?;
    validate_history(history)?;
    if cfg.samples_k == 1 {
        return model.complete_chat(history, cfg);
    }
    let mut completions = Vec::with_capacity(cfg.samples_k as usize);
    for _ in 0..cfg.samples_k {
        completions.push(model.complete_chat(history, cfg)?);
    }
    let forms: Vec<String> = completions.iter().map(|c| normal_form(c)).collect();
    let winner = dr::majority_answer(&forms)
        .map_err(|e| GatewayError::Protocol(format!("majority vote failed: {e}")))?
        .to_string();
    let idx = forms.iter().position(|f| *f == winner).expect("winner drawn from forms");
    Ok(completions.swap_remove(idx))
}

/// Token-bucket limiter state. The arithmetic is pure — callers supply the
/// elapsed time and sleep for the returned duration — so refill behavior is
/// directly testable.
#[derive(Debug, Clone)]
pub struct TokenBucket {
    rate: f64,
    burst: f64,
    tokens: f64,
}

impl TokenBucket {
    /// One second of burst headroom, never less than a single token.
    pub fn new(rate_per_sec: f64) -> Self {
        let burst = rate_per_sec.max(1.0);
        TokenBucket { rate: rate_per_sec, burst, tokens: burst }
    }

    /// Refill for `elapsed`, debit one token, and report how long the caller
    /// must wait before acting. Debt is allowed: concurrent callers queue up
    /// behind each other at exactly `1/rate` spacing.
    pub fn advance_and_take(&mut self, elapsed: Duration) -> Duration {
        self.tokens = (self.tokens + elapsed.as_secs_f64() * self.rate).min(self.burst);
        self.tokens -= 1.0;
        if self.tokens >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-self.tokens / self.rate)
        }
    }
}
