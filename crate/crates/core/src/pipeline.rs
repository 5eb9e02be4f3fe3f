//! End-to-end orchestration: plan windows, build prompts, dispatch them to a
//! backend with bounded concurrency, parse and score the replies, and reduce
//! them to one prediction per movie.

use futures::stream::{self, StreamExt, TryStreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, DecodeParams, Transcript};
use crate::decoding::{
    assemble_movie, parse_chapters, parse_comprehensive, parse_concise, repeated_sampling_confidence,
    verdict_from_draft, FailureReason, MoviePrediction, ParseFailure, PartitionError, Quality, ShotVerdict,
    WindowResult,
};
use crate::model::{Chapter, ContextWindow, Movie};
use crate::prompting::{build_prompt, Prompt, PromptBuilder, PromptError, PromptScheme};
use crate::simkit::derive_seed;
use crate::windowing::{plan_windows, WindowError, WindowPlanConfig};

/// How verdicts and their confidences are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SegmentScheme {
    /// One greedy pass; confidence from the verdict-token logprobs.
    #[default]
    Comprehensive,
    /// One pass listing boundaries only. Unlisted shots are a confident no.
    Concise,
    /// `runs` temperature-sampled Concise passes; confidence is the Yes share.
    ConciseSampled { runs: usize },
}

impl SegmentScheme {
    pub fn prompt_scheme(&self) -> PromptScheme {
        match self {
            SegmentScheme::Comprehensive => PromptScheme::Comprehensive,
            SegmentScheme::Concise | SegmentScheme::ConciseSampled { .. } => PromptScheme::Concise,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SegmentScheme::Comprehensive => "comprehensive",
            SegmentScheme::Concise => "concise",
            SegmentScheme::ConciseSampled { .. } => "concise_sampled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    pub window: WindowPlanConfig,
    pub decode: DecodeParams,
    pub scheme: SegmentScheme,
    /// Maximum number of in-flight backend requests.
    pub concurrency: usize,
    /// Seeds the per-run temperatures and decode seeds of repeated sampling.
    pub seed: u64,
    pub temperature_range: (f64, f64),
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            window: WindowPlanConfig::default(),
            decode: DecodeParams::default(),
            scheme: SegmentScheme::Comprehensive,
            concurrency: 8,
            seed: 0,
            temperature_range: (0.5, 1.0),
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.window.validate()?;
        self.decode.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.concurrency == 0 {
            return Err(PipelineError::Config("concurrency must be positive".into()));
        }
        if let SegmentScheme::ConciseSampled { runs: 0 } = self.scheme {
            return Err(PipelineError::Config("repeated sampling needs at least one run".into()));
        }
        let (lo, hi) = self.temperature_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(PipelineError::Config(format!("bad temperature range ({lo}, {hi})")));
        }
        Ok(())
    }

    /// Decode parameters of every repeated-sampling run of `window`.
    pub fn sampled_params(&self, window: &ContextWindow, runs: usize) -> Vec<DecodeParams> {
        let (lo, hi) = self.temperature_range;
        (0..runs)
            .map(|r| {
                let seed = derive_seed(&[
                    b"sample",
                    &self.seed.to_le_bytes(),
                    window.id().as_bytes(),
                    &(r as u64).to_le_bytes(),
                ]);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let temperature = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                DecodeParams {
                    temperature,
                    seed: Some(seed),
                    ..self.decode.clone()
                }
            })
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("window {window}: {source}")]
    Backend {
        window: String,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

impl PipelineError {
    pub fn backend_error(&self) -> Option<&BackendError> {
        match self {
            PipelineError::Backend { source, .. } => Some(source),
            _ => None,
        }
    }
}

fn prompt_for(
    builder: &PromptBuilder,
    movie: &Movie,
    window: &ContextWindow,
    scheme: PromptScheme,
) -> Result<Prompt, PromptError> {
    let mut opts = builder.options.clone();
    opts.scheme = scheme;
    build_prompt(movie, window, &opts, &builder.template, &builder.frames)
}

async fn call<B: Backend + ?Sized>(
    backend: &B,
    prompt: &Prompt,
    params: &DecodeParams,
    window: &ContextWindow,
) -> Result<Transcript, PipelineError> {
    backend.generate(prompt, params).await.map_err(|source| PipelineError::Backend {
        window: window.id(),
        source,
    })
}

async fn segment_window<B: Backend + ?Sized>(
    backend: &B,
    builder: &PromptBuilder,
    movie: &Movie,
    window: ContextWindow,
    cfg: &SegmentConfig,
) -> Result<WindowResult, PipelineError> {
    let prompt = prompt_for(builder, movie, &window, cfg.scheme.prompt_scheme())?;
    let ids = window.focus_ids();
    let wid = window.id();
    let (verdicts, failures) = match cfg.scheme {
        SegmentScheme::Comprehensive => {
            let tr = call(backend, &prompt, &cfg.decode, &window).await?;
            let parse = parse_comprehensive(&tr, &ids).in_window(&wid);
            let verdicts = parse.drafts.iter().map(|d| verdict_from_draft(d, &tr)).collect();
            (verdicts, parse.failures)
        }
        SegmentScheme::Concise => {
            let tr = call(backend, &prompt, &cfg.decode, &window).await?;
            let parse = parse_concise(&tr, &ids).in_window(&wid);
            let mut verdicts: Vec<ShotVerdict> = parse
                .drafts
                .iter()
                .filter(|d| d.decision)
                .map(|d| verdict_from_draft(d, &tr))
                .collect();
            for id in &ids {
                if !verdicts.iter().any(|v| v.shot_id == *id) {
                    verdicts.push(ShotVerdict::hard(*id, false, Quality::Ok));
                }
            }
            (verdicts, parse.failures)
        }
        SegmentScheme::ConciseSampled { runs } => {
            let mut transcripts = Vec::with_capacity(runs);
            for params in cfg.sampled_params(&window, runs) {
                transcripts.push(call(backend, &prompt, &params, &window).await?);
            }
            let (shares, mut failures) = repeated_sampling_confidence(&transcripts, &ids);
            for f in &mut failures {
                f.window = wid.clone();
            }
            let verdicts = shares.into_iter().map(|(id, s)| ShotVerdict::from_share(id, s)).collect();
            (verdicts, failures)
        }
    };
    Ok(WindowResult { window, verdicts, failures })
}

/// Segments one movie. Any backend error aborts the movie so no partial
/// verdicts leak downstream; parse failures are recorded and non-fatal.
pub async fn segment_movie<B: Backend + ?Sized>(
    backend: &B,
    builder: &PromptBuilder,
    movie: &Movie,
    cfg: &SegmentConfig,
) -> Result<MoviePrediction, PipelineError> {
    cfg.validate()?;
    let windows = plan_windows(&movie.movie_id, movie.num_shots(), &cfg.window)?;
    let results: Vec<WindowResult> = stream::iter(windows)
        .map(|w| segment_window(backend, builder, movie, w, cfg))
        .buffer_unordered(cfg.concurrency)
        .try_collect()
        .await?;
    Ok(assemble_movie(&movie.movie_id, results, movie.num_shots())?)
}

/// The per-movie chaptering output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterDump {
    pub movie_id: String,
    pub chapters: Vec<Chapter>,
    #[serde(default)]
    pub failures: Vec<ParseFailure>,
}

impl ChapterDump {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("dump serializes");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

/// Merges per-window chapter lists into one ascending list. A start already
/// taken by an earlier window is recorded as non-monotone.
pub fn merge_chapters(movie_id: &str, mut per_window: Vec<(ContextWindow, Vec<Chapter>, Vec<ParseFailure>)>) -> ChapterDump {
    per_window.sort_by_key(|(w, _, _)| w.focus_start);
    let mut chapters: Vec<Chapter> = Vec::new();
    let mut failures = Vec::new();
    for (w, cs, fs) in per_window {
        failures.extend(fs);
        for c in cs {
            if chapters.last().is_some_and(|l| c.start_s <= l.start_s) {
                failures.push(ParseFailure {
                    window: w.id(),
                    shot_id: None,
                    line: crate::decoding::format_chapters(std::slice::from_ref(&c)),
                    reason: FailureReason::NonMonotone,
                });
            } else {
                chapters.push(c);
            }
        }
    }
    ChapterDump {
        movie_id: movie_id.to_string(),
        chapters,
        failures,
    }
}

pub async fn chapter_movie<B: Backend + ?Sized>(
    backend: &B,
    builder: &PromptBuilder,
    movie: &Movie,
    cfg: &SegmentConfig,
) -> Result<ChapterDump, PipelineError> {
    cfg.validate()?;
    let windows = plan_windows(&movie.movie_id, movie.num_shots(), &cfg.window)?;
    let per_window = stream::iter(windows)
        .map(|w| async move {
            let prompt = prompt_for(builder, movie, &w, PromptScheme::Chapter)?;
            let tr = call(backend, &prompt, &cfg.decode, &w).await?;
            let parse = parse_chapters(&tr.text).in_window(&w.id());
            Ok::<_, PipelineError>((w, parse.chapters, parse.failures))
        })
        .buffer_unordered(cfg.concurrency)
        .try_collect()
        .await?;
    Ok(merge_chapters(&movie.movie_id, per_window))
}
