use std::time::Duration;

use async_trait::async_trait;
use reqwest::header::{AUTHORIZATION, CONTENT_TYPE};
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::wire::{self, ChatMessage, ChatRequest, ChatResponse, MessageContent, REQUEST_ID_HEADER};
use super::{request_id, Backend, BackendError, DecodeParams, ProtocolError, Transcript};
use crate::prompting::Prompt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub auth_token: Option<String>,
    pub timeout_ms: u64,
    pub max_attempts: usize,
    pub backoff_base_ms: u64,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        HttpBackendConfig {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            auth_token: None,
            timeout_ms: 120_000,
            max_attempts: 3,
            backoff_base_ms: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HealthReport {
    Healthy,
    Degraded(ProtocolError),
}

#[derive(Debug, Clone)]
pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::Client,
}

enum Attempt {
    Retry(String),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        // Errs only when a provider is already installed, which is fine.
        let _ = rustls::crypto::ring::default_provider().install_default();
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| BackendError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(HttpBackend { config, client })
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.config
    }

    async fn post_once(&self, body: &str, req_id: &str) -> Result<ChatResponse, Attempt> {
        let mut req = self
            .client
            .post(&self.config.endpoint)
            .header(CONTENT_TYPE, "application/json")
            .header(REQUEST_ID_HEADER, req_id)
            .body(body.to_string());
        if let Some(token) = &self.config.auth_token {
            req = req.header(AUTHORIZATION, format!("Bearer {token}"));
        }
        let resp = req.send().await.map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        let bytes = resp.bytes().await.map_err(|e| Attempt::Retry(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(BackendError::Transport {
                attempts: 1,
                message: format!("HTTP {status}"),
            }));
        }
        serde_json::from_slice(&bytes).map_err(|e| {
            Attempt::Fatal(BackendError::Protocol(ProtocolError::Malformed(e.to_string())))
        })
    }

    /// Posts with bounded exponential backoff; only transport failures are
    /// retried.
    async fn post(&self, request: &ChatRequest, req_id: &str) -> Result<ChatResponse, BackendError> {
        let body = serde_json::to_string(request)
            .map_err(|e| BackendError::InvalidParams(e.to_string()))?;
        let attempts = self.config.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.post_once(&body, req_id).await {
                Ok(resp) => return Ok(resp),
                Err(Attempt::Fatal(BackendError::Transport { message, .. })) => {
                    return Err(BackendError::Transport {
                        attempts: attempt,
                        message,
                    })
                }
                Err(Attempt::Fatal(err)) => return Err(err),
                Err(Attempt::Retry(msg)) => {
                    warn!(request = req_id, attempt, error = %msg, "transport failure");
                    last = msg;
                    if attempt < attempts {
                        let delay = self.config.backoff_base_ms << (attempt - 1).min(16);
                        tokio::time::sleep(Duration::from_millis(delay)).await;
                    }
                }
            }
        }
        Err(BackendError::Transport {
            attempts,
            message: last,
        })
    }

    /// Sends a tiny text-only request and checks that top-k logprobs come
    /// back.
    pub async fn health(&self, top_logprobs_k: usize) -> Result<HealthReport, BackendError> {
        let request = ChatRequest {
            model: self.config.model.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: MessageContent::Text("Reply with the single word Yes.".into()),
            }],
            temperature: 0.0,
            max_tokens: 4,
            logprobs: true,
            top_logprobs: top_logprobs_k,
            seed: None,
        };
        let resp = self.post(&request, "health").await?;
        let has_top_k = resp
            .choices
            .first()
            .and_then(|c| c.logprobs.as_ref())
            .and_then(|l| l.content.as_ref())
            .is_some_and(|entries| {
                !entries.is_empty() && entries.iter().all(|e| !e.top_logprobs.is_empty())
            });
        if resp.choices.is_empty() {
            return Ok(HealthReport::Degraded(ProtocolError::NoChoices));
        }
        if !has_top_k {
            return Ok(HealthReport::Degraded(ProtocolError::MissingLogprobs));
        }
        Ok(HealthReport::Healthy)
    }
}

#[async_trait]
impl Backend for HttpBackend {
    async fn generate(&self, prompt: &Prompt, params: &DecodeParams) -> Result<Transcript, BackendError> {
        params.validate()?;
        let req_id = request_id(prompt, params);
        let request = wire::build_request(&self.config.model, prompt, params);
        debug!(request = %req_id, "posting chat completion");
        let resp = self.post(&request, &req_id).await?;
        wire::transcript_from_response(resp, params.max_new_tokens)
    }
}
