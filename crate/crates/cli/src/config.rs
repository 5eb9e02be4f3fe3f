use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use shotseg::backend::{DecodeParams, HttpBackendConfig};
use shotseg::metrics::{EvalOptions, DEFAULT_TOLERANCES_S};
use shotseg::pipeline::{SegmentConfig, SegmentScheme};
use shotseg::prompting::{PromptOptions, PromptScheme};
use shotseg::simkit::{NoiseParams, SyntheticConfig};
use shotseg::windowing::WindowPlanConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

/// Every knob of a run. Missing fields take their defaults, so a config
/// file only needs the values it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backend: BackendKind,
    pub http: HttpBackendConfig,
    /// Mock backend only.
    pub noise: NoiseParams,
    pub window: WindowPlanConfig,
    pub prompt: PromptOptions,
    pub decode: DecodeParams,
    pub scheme: SegmentScheme,
    pub concurrency: usize,
    pub seed: u64,
    pub template: Option<PathBuf>,
    pub frame_cache: Option<PathBuf>,
    /// Manifest files or directories holding `*.manifest.json`.
    pub manifests: Vec<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub synth: SyntheticConfig,
    pub eval: EvalOptions,
    pub chapter_tolerances_s: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            backend: BackendKind::Mock,
            http: HttpBackendConfig::default(),
            noise: NoiseParams::default(),
            window: WindowPlanConfig::default(),
            prompt: PromptOptions::default(),
            decode: DecodeParams::default(),
            scheme: SegmentScheme::Comprehensive,
            concurrency: 8,
            seed: 0,
            template: None,
            frame_cache: None,
            manifests: Vec::new(),
            out_dir: None,
            synth: SyntheticConfig::default(),
            eval: EvalOptions::default(),
            chapter_tolerances_s: DEFAULT_TOLERANCES_S.to_vec(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_slice(&bytes).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn segment_config(&self) -> SegmentConfig {
        SegmentConfig {
            window: self.window,
            decode: self.decode.clone(),
            scheme: self.scheme,
            concurrency: self.concurrency,
            seed: self.seed,
            ..Default::default()
        }
    }

    /// Cross-field checks. The chapter grammar is reached through the
    /// `chapters` command, never through the segmentation scheme.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.segment_config().validate()?;
        self.prompt.validate()?;
        self.noise.validate()?;
        if self.prompt.scheme == PromptScheme::Chapter {
            anyhow::bail!("prompt.scheme must not be \"chapter\"; use the chapters command");
        }
        if self.chapter_tolerances_s.is_empty() || self.chapter_tolerances_s.iter().any(|t| !t.is_finite() || *t < 0.0) {
            anyhow::bail!("chapter_tolerances_s must be a non-empty list of non-negative seconds");
        }
        if !(self.eval.threshold.is_finite() && self.eval.outlier_z > 0.0) {
            anyhow::bail!("eval.threshold must be finite and eval.outlier_z positive");
        }
        Ok(())
    }
}
