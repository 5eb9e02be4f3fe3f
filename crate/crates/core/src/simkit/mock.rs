use std::collections::HashMap;
use std::sync::Mutex;

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::derive_seed;
use crate::backend::{
    request_id, simple_tokenize, Alternative, Backend, BackendError, DecodeParams, TokenEvent, Transcript,
};
use crate::decoding::{format_chapters, format_rationale};
use crate::model::{Chapter, Movie};
use crate::prompting::{Prompt, PromptScheme, PromptScope};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeDegradation {
    /// Context shots wanted on each side of a focus shot.
    pub margin: usize,
    /// Flip probability added when a side falls short.
    pub extra: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub p_flip: f64,
    /// Beta(a, b) for the certainty of correct verdicts.
    pub conf_correct: (f64, f64),
    /// Beta(a, b) for the certainty of flipped verdicts.
    pub conf_wrong: (f64, f64),
    pub edge_degradation: Option<EdgeDegradation>,
    pub seed: u64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            p_flip: 0.0,
            conf_correct: (8.0, 2.0),
            conf_wrong: (2.0, 8.0),
            edge_degradation: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid noise parameters: {0}")]
pub struct NoiseError(String);

impl NoiseParams {
    pub fn validate(&self) -> Result<(), NoiseError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.p_flip) {
            return Err(NoiseError(format!("p_flip {} outside [0,1]", self.p_flip)));
        }
        for (a, b) in [self.conf_correct, self.conf_wrong] {
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(NoiseError(format!("Beta({a}, {b}) needs positive parameters")));
            }
        }
        if let Some(e) = self.edge_degradation {
            if !prob(e.extra) {
                return Err(NoiseError(format!("edge extra {} outside [0,1]", e.extra)));
            }
        }
        Ok(())
    }
}

/// Ground truth the mock answers from.
#[derive(Debug, Clone, PartialEq)]
pub struct MockTruth {
    pub labels: Vec<bool>,
    pub shot_times: Vec<(f64, f64)>,
    pub chapters: Vec<Chapter>,
}

impl MockTruth {
    pub fn from_movie(movie: &Movie, chapters: Vec<Chapter>) -> Self {
        MockTruth {
            labels: movie
                .shots
                .iter()
                .map(|s| s.boundary_label.unwrap_or(false))
                .collect(),
            shot_times: movie
                .shots
                .iter()
                .map(|s| (s.start_s.unwrap_or(0.0), s.end_s.unwrap_or(0.0)))
                .collect(),
            chapters,
        }
    }
}

const FILLERS: [&str; 3] = [" Maybe", " The", " Not"];
const TEXT_LOGPROB: f64 = -1e-3;

/// Whether a focus shot lacks wanted context on either side. Only shots that
/// exist in the movie count as wanted, so the movie ends never degrade.
pub fn is_degraded(scope: &PromptScope, shot: usize, num_shots: usize, margin: usize) -> bool {
    let left_have = shot - scope.context.start;
    let right_have = scope.context.end - 1 - shot;
    let left_want = margin.min(shot);
    let right_want = margin.min(num_shots - 1 - shot);
    left_have < left_want || right_have < right_want
}

fn text_tokens(text: &str, out: &mut Vec<TokenEvent>) {
    for tok in simple_tokenize(text) {
        out.push(TokenEvent::new(tok, TEXT_LOGPROB, vec![]));
    }
}

/// A verdict token whose Yes/No alternatives carry `certainty` and
/// `1 - certainty` of the two-way mass; fillers sit strictly below both.
fn verdict_token(yes: bool, certainty: f64, k: usize) -> TokenEvent {
    let other_p = 1.0 - certainty;
    let filler: Vec<f64> = (0..FILLERS.len()).map(|i| other_p * (-2.0 - i as f64).exp()).collect();
    let scale = 1.0 / (1.0 + filler.iter().sum::<f64>());
    let (chosen, other) = if yes { (" Yes", " No") } else { (" No", " Yes") };
    let mut alts = vec![
        Alternative { token: chosen.into(), logprob: (certainty * scale).ln() },
        Alternative { token: other.into(), logprob: (other_p * scale).ln() },
    ];
    for (tok, p) in FILLERS.iter().zip(filler) {
        alts.push(Alternative { token: (*tok).into(), logprob: (p * scale).ln() });
    }
    alts.truncate(k.max(1));
    TokenEvent::new(chosen, (certainty * scale).ln(), alts)
}

fn rationale_text(shot: usize, truth: &MockTruth) -> String {
    let next = shot + 1;
    if next < truth.labels.len() {
        format!("Setting and cast change between shot {shot} and shot {next}.")
    } else {
        format!("Shot {shot} closes the final scene.")
    }
}

/// Produces the reply a model would give for `prompt` if it saw the ground
/// truth through the configured noise. Randomness is seeded by the window,
/// the decode seed and the scheme, so results do not depend on call order.
pub fn mock_generate(
    prompt: &Prompt,
    params: &DecodeParams,
    truth: &MockTruth,
    noise: &NoiseParams,
) -> Result<Transcript, BackendError> {
    params.validate()?;
    noise
        .validate()
        .map_err(|e| BackendError::InvalidParams(e.to_string()))?;
    let scope = prompt.scope.as_ref().ok_or(BackendError::ScopeMissing)?;
    let n = truth.labels.len();
    if scope.context.end > n || scope.focus.is_empty() {
        return Err(BackendError::InvalidParams(format!(
            "window {} does not fit a {n}-shot truth",
            scope.window_id()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[
        b"mock",
        &noise.seed.to_le_bytes(),
        scope.movie_id.as_bytes(),
        &(scope.focus.start as u64).to_le_bytes(),
        &(scope.focus.end as u64).to_le_bytes(),
        &params.seed.map_or(u64::MAX, |s| s).to_le_bytes(),
        scope.scheme.as_str().as_bytes(),
    ]));
    let beta_ok = Beta::new(noise.conf_correct.0, noise.conf_correct.1).expect("validated");
    let beta_wrong = Beta::new(noise.conf_wrong.0, noise.conf_wrong.1).expect("validated");

    let mut tokens = Vec::new();
    match scope.scheme {
        PromptScheme::Comprehensive | PromptScheme::Concise => {
            let concise = scope.scheme == PromptScheme::Concise;
            let mut first = true;
            for shot in scope.focus.clone() {
                let mut p = noise.p_flip;
                if let Some(e) = noise.edge_degradation {
                    if is_degraded(scope, shot, n, e.margin) {
                        p += e.extra;
                    }
                }
                let u: f64 = rng.random();
                let flipped = u < p.min(1.0);
                let draw = if flipped {
                    beta_wrong.sample(&mut rng)
                } else {
                    beta_ok.sample(&mut rng)
                };
                let certainty = (0.5 + 0.5 * draw).clamp(0.5 + 1e-9, 1.0 - 1e-9);
                let yes = truth.labels[shot] != flipped;
                if concise && !yes {
                    continue;
                }
                if !first {
                    text_tokens("\n", &mut tokens);
                }
                first = false;
                text_tokens(&format!("Shot {shot}:"), &mut tokens);
                tokens.push(verdict_token(yes, certainty, params.top_logprobs_k));
                if yes && scope.explain {
                    text_tokens(
                        &format!("\n{}", format_rationale(shot, &rationale_text(shot, truth))),
                        &mut tokens,
                    );
                }
            }
        }
        PromptScheme::Chapter => {
            let from = truth.shot_times[scope.focus.start].0;
            let last = scope.focus.end - 1;
            let to = truth.shot_times[last].1;
            let closes_movie = scope.focus.end == n;
            let chosen: Vec<Chapter> = truth
                .chapters
                .iter()
                .filter(|c| c.start_s >= from && (c.start_s < to || (closes_movie && c.start_s <= to)))
                .filter(|_| rng.random::<f64>() >= noise.p_flip)
                .cloned()
                .collect();
            text_tokens(&format_chapters(&chosen), &mut tokens);
        }
    }
    if tokens.len() > params.max_new_tokens {
        return Err(BackendError::BudgetExceeded {
            max_new_tokens: params.max_new_tokens,
        });
    }
    Ok(Transcript::from_tokens(tokens))
}

/// A [`Backend`] answering from per-movie ground truth.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    truths: HashMap<String, MockTruth>,
    pub noise: NoiseParams,
}

impl MockBackend {
    pub fn new(noise: NoiseParams) -> Self {
        MockBackend {
            truths: HashMap::new(),
            noise,
        }
    }

    pub fn add_movie(&mut self, movie: &Movie, chapters: Vec<Chapter>) {
        self.truths
            .insert(movie.movie_id.clone(), MockTruth::from_movie(movie, chapters));
    }

    pub fn with_movie(mut self, movie: &Movie, chapters: Vec<Chapter>) -> Self {
        self.add_movie(movie, chapters);
        self
    }
}

#[async_trait]
impl Backend for MockBackend {
    async fn generate(&self, prompt: &Prompt, params: &DecodeParams) -> Result<Transcript, BackendError> {
        let scope = prompt.scope.as_ref().ok_or(BackendError::ScopeMissing)?;
        let truth = self
            .truths
            .get(&scope.movie_id)
            .ok_or_else(|| BackendError::NoReply(scope.window_id()))?;
        mock_generate(prompt, params, truth, &self.noise)
    }
}

/// Wraps a backend and keeps every successful transcript by request id, so
/// a run can be replayed through another transport.
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<(String, Transcript)>>,
}

impl<B> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    /// Recorded (request id, transcript) pairs sorted by id.
    pub fn recorded(&self) -> Vec<(String, Transcript)> {
        let mut log = self.log.lock().unwrap().clone();
        log.sort_by(|a, b| a.0.cmp(&b.0));
        log
    }
}

#[async_trait]
impl<B: Backend> Backend for RecordingBackend<B> {
    async fn generate(&self, prompt: &Prompt, params: &DecodeParams) -> Result<Transcript, BackendError> {
        let tr = self.inner.generate(prompt, params).await?;
        self.log
            .lock()
            .unwrap()
            .push((request_id(prompt, params), tr.clone()));
        Ok(tr)
    }
}
