//! A protocol-level chat-completions stub for integration tests.
//!
//! Replies are scripted per request id (the `x-request-id` header) with an
//! optional default. Every request body is recorded. The server runs on its
//! own thread and runtime, so it can be used from sync and async tests alike.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use tokio::sync::oneshot;

use super::wire::{response_for, ChatRequest, REQUEST_ID_HEADER};
use super::{simple_tokenize, Alternative, TokenEvent, Transcript};

pub const CHAT_PATH: &str = "/v1/chat/completions";

#[derive(Debug, Clone)]
pub struct StubReply {
    pub transcript: Transcript,
    pub finish_reason: String,
    pub omit_logprobs: bool,
    pub status: u16,
    pub delay: Duration,
}

impl StubReply {
    pub fn from_transcript(transcript: Transcript) -> Self {
        StubReply {
            transcript,
            finish_reason: "stop".into(),
            omit_logprobs: false,
            status: 200,
            delay: Duration::ZERO,
        }
    }

    /// Tokenizes `text` and attaches synthetic logprobs: Yes/No tokens get
    /// p = 0.9 with the opposite answer at p = 0.1 as the runner-up.
    pub fn text(text: &str) -> Self {
        let tokens = simple_tokenize(text)
            .into_iter()
            .map(|tok| {
                let bare = tok.trim().to_ascii_lowercase();
                let lead: String = tok.chars().take_while(|c| c.is_whitespace()).collect();
                let other = match bare.as_str() {
                    "yes" => Some(format!("{lead}No")),
                    "no" => Some(format!("{lead}Yes")),
                    _ => None,
                };
                match other {
                    Some(other) => TokenEvent::new(
                        tok,
                        0.9f64.ln(),
                        vec![Alternative {
                            token: other,
                            logprob: 0.1f64.ln(),
                        }],
                    ),
                    None => TokenEvent::new(tok, -1e-3, vec![]),
                }
            })
            .collect();
        Self::from_transcript(Transcript::from_tokens(tokens))
    }

    pub fn without_logprobs(mut self) -> Self {
        self.omit_logprobs = true;
        self
    }

    pub fn with_status(mut self, status: u16) -> Self {
        self.status = status;
        self
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn with_finish_reason(mut self, reason: &str) -> Self {
        self.finish_reason = reason.into();
        self
    }
}

#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub request_id: Option<String>,
    pub body: ChatRequest,
}

#[derive(Default)]
struct StubState {
    replies: HashMap<String, StubReply>,
    default: Option<StubReply>,
    requests: Vec<RecordedRequest>,
}

pub struct StubServer {
    addr: SocketAddr,
    state: Arc<Mutex<StubState>>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start() -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let state = Arc::new(Mutex::new(StubState::default()));
        let (tx, rx) = oneshot::channel::<()>();
        let app_state = Arc::clone(&state);
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .expect("stub runtime");
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("stub listener");
                let app = Router::new()
                    .route(CHAT_PATH, post(handle))
                    .with_state(app_state);
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(StubServer {
            addr,
            state,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}{CHAT_PATH}", self.addr)
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn script(&self, request_id: impl Into<String>, reply: StubReply) {
        self.state
            .lock()
            .unwrap()
            .replies
            .insert(request_id.into(), reply);
    }

    pub fn set_default(&self, reply: StubReply) {
        self.state.lock().unwrap().default = Some(reply);
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.state.lock().unwrap().requests.clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

async fn handle(
    State(state): State<Arc<Mutex<StubState>>>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let request: ChatRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    };
    let request_id = headers
        .get(REQUEST_ID_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let reply = {
        let mut st = state.lock().unwrap();
        st.requests.push(RecordedRequest {
            request_id: request_id.clone(),
            body: request,
        });
        request_id
            .as_ref()
            .and_then(|id| st.replies.get(id).cloned())
            .or_else(|| st.default.clone())
    };
    let Some(reply) = reply else {
        return (
            StatusCode::NOT_FOUND,
            format!("no scripted reply for {request_id:?}"),
        )
            .into_response();
    };
    if !reply.delay.is_zero() {
        tokio::time::sleep(reply.delay).await;
    }
    let status = StatusCode::from_u16(reply.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    if !status.is_success() {
        return (status, "scripted failure").into_response();
    }
    let mut resp = response_for(&reply.transcript, &reply.finish_reason);
    if reply.omit_logprobs {
        resp.choices[0].logprobs = None;
    }
    (
        StatusCode::OK,
        [("content-type", "application/json")],
        serde_json::to_string(&resp).expect("response serializes"),
    )
        .into_response()
}
