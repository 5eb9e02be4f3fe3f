//! Chat-completions wire format with per-token log-probabilities.
//!
//! Request:
//!
//! ```json
//! {"model": "...", "messages": [
//!    {"role": "system", "content": "..."},
//!    {"role": "user", "content": [
//!        {"type": "text", "text": "..."},
//!        {"type": "image_url", "image_url": {"url": "data:image/png;base64,..."}}]}],
//!  "temperature": 0.0, "max_tokens": 512, "logprobs": true, "top_logprobs": 5, "seed": 7}
//! ```
//!
//! Response (the fields we read):
//!
//! ```json
//! {"choices": [{"message": {"content": "..."}, "finish_reason": "stop",
//!   "logprobs": {"content": [{"token": " Yes", "logprob": -0.1,
//!                             "top_logprobs": [{"token": " Yes", "logprob": -0.1}, ...]}]}}]}
//! ```
//!
//! The request id travels in the `x-request-id` header.

use std::io::Cursor;

use base64::Engine as _;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{Alternative, BackendError, DecodeParams, ProtocolError, TokenEvent, Transcript};
use crate::prompting::{Prompt, PromptPart};

pub const REQUEST_ID_HEADER: &str = "x-request-id";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: usize,
    pub logprobs: bool,
    pub top_logprobs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChatMessage {
    pub role: String,
    pub content: MessageContent,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MessageContent {
    Text(String),
    Parts(Vec<ContentPart>),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ImageUrl {
    pub url: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct ChatResponse {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub choices: Vec<Choice>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct Choice {
    #[serde(default)]
    pub index: usize,
    pub message: ResponseMessage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<ChoiceLogprobs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct ResponseMessage {
    #[serde(default)]
    pub role: Option<String>,
    #[serde(default)]
    pub content: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct ChoiceLogprobs {
    #[serde(default)]
    pub content: Option<Vec<TokenLogprob>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
    #[serde(default)]
    pub top_logprobs: Vec<TopLogprob>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TopLogprob {
    pub token: String,
    pub logprob: f64,
}

pub fn encode_png_data_url(img: &RgbImage) -> String {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(buf.into_inner())
    )
}

pub fn build_request(model: &str, prompt: &Prompt, params: &DecodeParams) -> ChatRequest {
    let parts = prompt
        .user_parts()
        .into_iter()
        .map(|part| match part {
            PromptPart::Text(text) => ContentPart::Text { text },
            PromptPart::Image(img) => ContentPart::ImageUrl {
                image_url: ImageUrl {
                    url: encode_png_data_url(&img),
                },
            },
        })
        .collect();
    ChatRequest {
        model: model.to_string(),
        messages: vec![
            ChatMessage {
                role: "system".into(),
                content: MessageContent::Text(prompt.system_text.clone()),
            },
            ChatMessage {
                role: "user".into(),
                content: MessageContent::Parts(parts),
            },
        ],
        temperature: params.temperature,
        max_tokens: params.max_new_tokens,
        logprobs: true,
        top_logprobs: params.top_logprobs_k,
        seed: params.seed,
    }
}

/// Converts a parsed response into a transcript. `finish_reason == "length"`
/// becomes `BudgetExceeded`.
pub fn transcript_from_response(
    resp: ChatResponse,
    max_new_tokens: usize,
) -> Result<Transcript, BackendError> {
    let choice = resp
        .choices
        .into_iter()
        .next()
        .ok_or(ProtocolError::NoChoices)?;
    if choice.finish_reason.as_deref() == Some("length") {
        return Err(BackendError::BudgetExceeded { max_new_tokens });
    }
    let content = choice.message.content.unwrap_or_default();
    let entries = choice
        .logprobs
        .and_then(|l| l.content)
        .ok_or(ProtocolError::MissingLogprobs)?;
    if entries.is_empty() && !content.is_empty() {
        return Err(ProtocolError::MissingLogprobs.into());
    }
    let tokens = entries
        .into_iter()
        .map(|e| {
            let alts = e
                .top_logprobs
                .into_iter()
                .map(|a| Alternative {
                    token: a.token,
                    logprob: a.logprob,
                })
                .collect();
            TokenEvent::new(e.token, e.logprob, alts)
        })
        .collect();
    let transcript = Transcript {
        text: content,
        tokens,
    };
    transcript.check()?;
    Ok(transcript)
}

/// The response a conforming server would send for `transcript`.
pub fn response_for(transcript: &Transcript, finish_reason: &str) -> ChatResponse {
    ChatResponse {
        id: None,
        choices: vec![Choice {
            index: 0,
            message: ResponseMessage {
                role: Some("assistant".into()),
                content: Some(transcript.text.clone()),
            },
            logprobs: Some(ChoiceLogprobs {
                content: Some(
                    transcript
                        .tokens
                        .iter()
                        .map(|t| TokenLogprob {
                            token: t.token_text.clone(),
                            logprob: t.logprob,
                            top_logprobs: t
                                .alternatives
                                .iter()
                                .map(|a| TopLogprob {
                                    token: a.token.clone(),
                                    logprob: a.logprob,
                                })
                                .collect(),
                        })
                        .collect(),
                ),
            }),
            finish_reason: Some(finish_reason.to_string()),
        }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Transcript {
        Transcript::from_tokens(vec![
            TokenEvent::new("Shot", -0.01, vec![]),
            TokenEvent::new(
                " Yes",
                -0.105,
                vec![
                    Alternative { token: " Yes".into(), logprob: -0.105 },
                    Alternative { token: " No".into(), logprob: -2.3 },
                ],
            ),
        ])
    }

    #[test]
    fn response_roundtrip_is_exact() {
        let tr = sample();
        let json = serde_json::to_string(&response_for(&tr, "stop")).unwrap();
        let back: ChatResponse = serde_json::from_str(&json).unwrap();
        assert_eq!(transcript_from_response(back, 16).unwrap(), tr);
    }

    #[test]
    fn missing_or_null_logprobs() {
        let mut resp = response_for(&sample(), "stop");
        resp.choices[0].logprobs = None;
        assert!(matches!(
            transcript_from_response(resp.clone(), 16),
            Err(BackendError::Protocol(ProtocolError::MissingLogprobs))
        ));
        let json = r#"{"choices":[{"message":{"content":"Shot"},"logprobs":null}]}"#;
        let resp: ChatResponse = serde_json::from_str(json).unwrap();
        assert!(matches!(
            transcript_from_response(resp, 16),
            Err(BackendError::Protocol(ProtocolError::MissingLogprobs))
        ));
    }

    #[test]
    fn length_finish_is_budget_exceeded() {
        let resp = response_for(&sample(), "length");
        assert!(matches!(
            transcript_from_response(resp, 16),
            Err(BackendError::BudgetExceeded { max_new_tokens: 16 })
        ));
    }

    #[test]
    fn content_mismatch_is_protocol_error() {
        let mut resp = response_for(&sample(), "stop");
        resp.choices[0].message.content = Some("something else".into());
        assert!(matches!(
            transcript_from_response(resp, 16),
            Err(BackendError::Protocol(ProtocolError::TokenTextMismatch))
        ));
        let empty = ChatResponse::default();
        assert!(matches!(
            transcript_from_response(empty, 16),
            Err(BackendError::Protocol(ProtocolError::NoChoices))
        ));
    }

    #[test]
    fn request_shape() {
        let req = ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: MessageContent::Parts(vec![
                    ContentPart::Text { text: "hi".into() },
                    ContentPart::ImageUrl { image_url: ImageUrl { url: "data:x".into() } },
                ]),
            }],
            temperature: 0.0,
            max_tokens: 8,
            logprobs: true,
            top_logprobs: 5,
            seed: None,
        };
        let v: serde_json::Value = serde_json::to_value(&req).unwrap();
        assert_eq!(v["messages"][0]["content"][1]["type"], "image_url");
        assert_eq!(v["messages"][0]["content"][1]["image_url"]["url"], "data:x");
        assert_eq!(v["logprobs"], true);
        assert!(v.get("seed").is_none());
    }
}
