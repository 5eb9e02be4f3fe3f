//! Model backends: the [`Backend`] contract, a chat-completions HTTP client
//! with per-token log-probabilities, and a protocol-level stub server.

mod http;
pub mod stub;
pub mod wire;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompting::Prompt;

pub use http::{HealthReport, HttpBackend, HttpBackendConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub top_logprobs_k: usize,
    pub seed: Option<u64>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            temperature: 0.0,
            max_new_tokens: 512,
            top_logprobs_k: 5,
            seed: None,
        }
    }
}

impl DecodeParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidParams(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(BackendError::InvalidParams("max_new_tokens must be positive".into()));
        }
        if !(1..=20).contains(&self.top_logprobs_k) {
            return Err(BackendError::InvalidParams(format!(
                "top_logprobs_k must be 1..=20, got {}",
                self.top_logprobs_k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub token: String,
    pub logprob: f64,
}

/// One generated token with its natural-log probability and the top-k
/// alternatives at that position (sorted by descending logprob, chosen
/// token included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEvent {
    pub token_text: String,
    pub logprob: f64,
    pub alternatives: Vec<Alternative>,
}

impl TokenEvent {
    /// Builds an event, inserting the chosen token into the alternatives if
    /// the server left it out and restoring descending order.
    pub fn new(token_text: impl Into<String>, logprob: f64, mut alternatives: Vec<Alternative>) -> Self {
        let token_text = token_text.into();
        if !alternatives.iter().any(|a| a.token == token_text) {
            alternatives.push(Alternative {
                token: token_text.clone(),
                logprob,
            });
        }
        alternatives.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
        TokenEvent {
            token_text,
            logprob,
            alternatives,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Transcript {
    pub text: String,
    pub tokens: Vec<TokenEvent>,
}

impl Transcript {
    pub fn from_tokens(tokens: Vec<TokenEvent>) -> Self {
        let text = tokens.iter().map(|t| t.token_text.as_str()).collect();
        Transcript { text, tokens }
    }

    /// Byte offset of each token's first byte within `text`.
    pub fn token_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.tokens.len());
        let mut at = 0;
        for t in &self.tokens {
            offsets.push(at);
            at += t.token_text.len();
        }
        offsets
    }

    /// Index of the token containing byte `offset` of `text`.
    pub fn token_at(&self, offset: usize) -> Option<usize> {
        let offsets = self.token_offsets();
        let idx = match offsets.binary_search(&offset) {
            Ok(mut i) => {
                // skip empty tokens sharing the offset
                while i + 1 < offsets.len() && offsets[i + 1] == offset {
                    i += 1;
                }
                i
            }
            Err(0) => return None,
            Err(i) => i - 1,
        };
        let t = self.tokens.get(idx)?;
        (offset < offsets[idx] + t.token_text.len()).then_some(idx)
    }

    pub fn check(&self) -> Result<(), ProtocolError> {
        let joined: String = self.tokens.iter().map(|t| t.token_text.as_str()).collect();
        if joined != self.text {
            return Err(ProtocolError::TokenTextMismatch);
        }
        for t in &self.tokens {
            if t.alternatives.windows(2).any(|w| w[0].logprob < w[1].logprob) {
                return Err(ProtocolError::UnsortedAlternatives);
            }
        }
        Ok(())
    }
}

/// Splits text into word-like tokens, attaching leading spaces to the word
/// that follows and keeping newlines and punctuation separate. Used by the
/// mock and the stub to synthesize token streams.
pub fn simple_tokenize(text: &str) -> Vec<String> {
    let mut tokens: Vec<String> = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        let is_word = ch.is_alphanumeric() || ch == '_';
        let continues = is_word
            && current
                .chars()
                .last()
                .is_some_and(|c| c.is_alphanumeric() || c == '_');
        let after_space = current.chars().all(|c| c == ' ') && !current.is_empty();
        if continues || (after_space && !ch.is_whitespace()) {
            current.push(ch);
            continue;
        }
        if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        current.push(ch);
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("response has no per-token logprobs")]
    MissingLogprobs,
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("response has no choices")]
    NoChoices,
    #[error("token texts do not reproduce the message content")]
    TokenTextMismatch,
    #[error("alternatives are not sorted by descending logprob")]
    UnsortedAlternatives,
}

#[derive(Debug, Clone, Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("generation hit max_new_tokens={max_new_tokens} before the output was complete")]
    BudgetExceeded { max_new_tokens: usize },
    #[error("prompt carries no structured scope")]
    ScopeMissing,
    #[error("invalid decode params: {0}")]
    InvalidParams(String),
    #[error("no scripted reply for request {0}")]
    NoReply(String),
}

impl BackendError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, BackendError::Transport { .. })
    }
}

/// Request id for a prompt: the window id, plus the seed when one is set so
/// repeated samples of a window have distinct ids.
pub fn request_id(prompt: &Prompt, params: &DecodeParams) -> String {
    let base = prompt
        .scope
        .as_ref()
        .map(|s| s.window_id())
        .unwrap_or_else(|| "unscoped".to_string());
    match params.seed {
        Some(seed) => format!("{base}@{seed}"),
        None => base,
    }
}

/// Anything that can turn a prompt into a transcript with logprobs.
#[async_trait]
pub trait Backend: Send + Sync {
    async fn generate(&self, prompt: &Prompt, params: &DecodeParams) -> Result<Transcript, BackendError>;
}

#[async_trait]
impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    async fn generate(&self, prompt: &Prompt, params: &DecodeParams) -> Result<Transcript, BackendError> {
        (**self).generate(prompt, params).await
    }
}
