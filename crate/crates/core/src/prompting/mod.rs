//! Structured multimodal prompts for one context window.
//!
//! A prompt is the system text followed by the user turn: task instructions,
//! the output grammar, one XML-style `<shot>` block per context shot (frames
//! first, then subtitle and actor fields), and the context/focus scope.
//! Images are carried as separate parts in block order; the rendered text
//! holds an `<image>` placeholder where each one sits.

mod frames;
mod marker;
mod template;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::PathBuf;
use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ContextWindow, Movie};

pub use frames::{sample_frame_indices, FrameStore, RasterImage};
pub use marker::{
    annotate_frame, marker_box, read_marker, resize_frame, FRAME_HEIGHT, FRAME_WIDTH,
};
pub use template::PromptTemplate;

pub const IMAGE_PLACEHOLDER: &str = "<image>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PromptScheme {
    /// Explicit `Shot <id>: Yes/No` line for every focus shot.
    #[default]
    Comprehensive,
    /// `Shot <id>: Yes` lines for boundaries only.
    Concise,
    /// `hh:mm:ss - Title` chapter lines.
    Chapter,
}

impl PromptScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            PromptScheme::Comprehensive => "comprehensive",
            PromptScheme::Concise => "concise",
            PromptScheme::Chapter => "chapter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptOptions {
    pub frames_per_shot: usize,
    pub include_subtitles: bool,
    pub include_actors: bool,
    pub include_markers: bool,
    pub scheme: PromptScheme,
    pub explain: bool,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions {
            frames_per_shot: 3,
            include_subtitles: true,
            include_actors: true,
            include_markers: true,
            scheme: PromptScheme::Comprehensive,
            explain: false,
        }
    }
}

impl PromptOptions {
    pub fn validate(&self) -> Result<(), PromptError> {
        if !(1..=3).contains(&self.frames_per_shot) {
            return Err(PromptError::Config(format!(
                "frames_per_shot must be 1..=3, got {}",
                self.frames_per_shot
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt config: {0}")]
    Config(String),
    #[error("template: {0}")]
    Template(String),
    #[error("shot {shot_id}: frame {} not found", path.display())]
    MissingFrame { shot_id: usize, path: PathBuf },
    #[error("cannot decode {}: {message}", path.display())]
    ImageDecode { path: PathBuf, message: String },
    #[error("window {0} does not fit the movie")]
    InvalidWindow(String),
}

/// Structured scope metadata. HTTP serialization drops it; the mock backend
/// answers from it directly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptScope {
    pub movie_id: String,
    pub context: Range<usize>,
    pub focus: Range<usize>,
    pub scheme: PromptScheme,
    pub explain: bool,
}

impl PromptScope {
    pub fn focus_ids(&self) -> Vec<usize> {
        self.focus.clone().collect()
    }

    pub fn window_id(&self) -> String {
        format!("{}:{}-{}", self.movie_id, self.focus.start, self.focus.end)
    }
}

#[derive(Debug, Clone)]
pub struct ShotBlock {
    pub shot_id: usize,
    /// Block text, with one `<image>` placeholder per attached image.
    pub text: String,
    pub images: Vec<Arc<RgbImage>>,
}

/// An ordered chunk of the user turn.
#[derive(Debug, Clone)]
pub enum PromptPart {
    Text(String),
    Image(Arc<RgbImage>),
}

#[derive(Debug, Clone)]
pub struct Prompt {
    pub system_text: String,
    pub instruction_text: String,
    pub shot_blocks: Vec<ShotBlock>,
    pub scope_text: String,
    pub scope: Option<PromptScope>,
    pub rendered_text: String,
    pub template_sha256: String,
}

impl Prompt {
    /// Focus shot ids, empty when the scope metadata was stripped.
    pub fn scope_ids(&self) -> Vec<usize> {
        self.scope.as_ref().map(PromptScope::focus_ids).unwrap_or_default()
    }

    pub fn images(&self) -> impl Iterator<Item = &Arc<RgbImage>> {
        self.shot_blocks.iter().flat_map(|b| b.images.iter())
    }

    pub fn word_count(&self) -> usize {
        self.rendered_text.split_whitespace().count()
    }

    /// The user turn as interleaved text and image parts, in block order.
    /// Adjacent text is merged.
    pub fn user_parts(&self) -> Vec<PromptPart> {
        let mut parts = Vec::new();
        let mut pending = String::new();
        pending.push_str(&self.instruction_text);
        pending.push_str("\n\n<shots>\n");
        for block in &self.shot_blocks {
            let mut pieces = block.text.split(IMAGE_PLACEHOLDER);
            pending.push_str(pieces.next().unwrap_or_default());
            for (img, piece) in block.images.iter().zip(pieces) {
                parts.push(PromptPart::Text(std::mem::take(&mut pending)));
                parts.push(PromptPart::Image(Arc::clone(img)));
                pending.push_str(piece);
            }
        }
        pending.push_str("</shots>\n\n");
        pending.push_str(&self.scope_text);
        parts.push(PromptPart::Text(pending));
        parts.retain(|p| !matches!(p, PromptPart::Text(t) if t.is_empty()));
        parts
    }

    /// Same prompt without the structured scope (what a remote server sees).
    pub fn without_scope(&self) -> Prompt {
        Prompt {
            scope: None,
            ..self.clone()
        }
    }
}

fn escape_xml(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

pub fn format_hms(seconds: f64) -> String {
    let total = seconds.max(0.0).round() as u64;
    format!("{:02}:{:02}:{:02}", total / 3600, (total / 60) % 60, total % 60)
}

fn join_ids(ids: impl IntoIterator<Item = usize>) -> String {
    ids.into_iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Builds prompts for windows of a movie. Holds the template, options and
/// frame store so repeated builds share decoded frames.
#[derive(Debug)]
pub struct PromptBuilder {
    pub template: PromptTemplate,
    pub options: PromptOptions,
    pub frames: FrameStore,
}

impl PromptBuilder {
    pub fn new(template: PromptTemplate, options: PromptOptions, frames: FrameStore) -> Self {
        PromptBuilder {
            template,
            options,
            frames,
        }
    }

    pub fn build(&self, movie: &Movie, window: &ContextWindow) -> Result<Prompt, PromptError> {
        build_prompt(movie, window, &self.options, &self.template, &self.frames)
    }
}

pub fn build_prompt(
    movie: &Movie,
    window: &ContextWindow,
    opts: &PromptOptions,
    template: &PromptTemplate,
    frames: &FrameStore,
) -> Result<Prompt, PromptError> {
    opts.validate()?;
    if !window.is_valid() || window.context_end > movie.num_shots() {
        return Err(PromptError::InvalidWindow(window.id()));
    }
    let chapter = opts.scheme == PromptScheme::Chapter;
    if chapter && !movie.has_timestamps() {
        return Err(PromptError::Config(
            "chapter scheme requires timestamps on every shot".into(),
        ));
    }

    let mut modalities = vec!["key frames"];
    if opts.include_subtitles {
        modalities.push("subtitles");
    }
    if opts.include_actors {
        modalities.push("actor ids");
    }
    let mut vars = BTreeMap::new();
    vars.insert("modalities", modalities.join(", "));
    vars.insert("context_first", window.context_start.to_string());
    vars.insert("context_last", (window.context_end - 1).to_string());
    vars.insert("focus_first", window.focus_start.to_string());
    vars.insert("focus_last", (window.focus_end - 1).to_string());
    vars.insert("focus_ids", join_ids(window.focus()));

    let (task, output) = match opts.scheme {
        PromptScheme::Comprehensive => (&template.task_segmentation, &template.output_comprehensive),
        PromptScheme::Concise => (&template.task_segmentation, &template.output_concise),
        PromptScheme::Chapter => (&template.task_chapter, &template.output_chapter),
    };
    let mut instruction_text = template::fill(task, &vars);
    instruction_text.push_str("\n\n");
    instruction_text.push_str(&template::fill(output, &vars));
    if opts.explain && !chapter {
        instruction_text.push_str("\n\n");
        instruction_text.push_str(&template::fill(&template.explain, &vars));
    }

    let mut shot_blocks = Vec::with_capacity(window.context_len());
    for shot in &movie.shots[window.context()] {
        let mut images = Vec::new();
        for idx in sample_frame_indices(shot.frame_refs.len(), opts.frames_per_shot) {
            images.push(frames.prepared(
                shot.shot_id,
                &shot.frame_refs[idx],
                opts.include_markers,
            )?);
        }
        let mut text = String::new();
        let _ = writeln!(text, "<shot id=\"{}\">", shot.shot_id);
        text.push_str("<frames>");
        for _ in &images {
            text.push_str(IMAGE_PLACEHOLDER);
        }
        text.push_str("</frames>\n");
        if chapter {
            let _ = writeln!(
                text,
                "<time start=\"{}\" end=\"{}\"/>",
                format_hms(shot.start_s.unwrap_or_default()),
                format_hms(shot.end_s.unwrap_or_default())
            );
        }
        if opts.include_subtitles {
            let _ = writeln!(text, "<subtitle>{}</subtitle>", escape_xml(&shot.subtitle_text));
        }
        if opts.include_actors {
            let actors: Vec<_> = shot.actor_ids.iter().map(|a| escape_xml(a)).collect();
            let _ = writeln!(text, "<actors>{}</actors>", actors.join(", "));
        }
        text.push_str("</shot>\n");
        shot_blocks.push(ShotBlock {
            shot_id: shot.shot_id,
            text,
            images,
        });
    }

    let scope_text = format!(
        "<scope>\n{}\n</scope>\n",
        template::fill(&template.scope, &vars)
    );
    let system_text = template::fill(&template.system, &vars);

    let mut rendered_text = String::new();
    rendered_text.push_str(&system_text);
    rendered_text.push_str("\n\n");
    rendered_text.push_str(&instruction_text);
    rendered_text.push_str("\n\n<shots>\n");
    for block in &shot_blocks {
        rendered_text.push_str(&block.text);
    }
    rendered_text.push_str("</shots>\n\n");
    rendered_text.push_str(&scope_text);

    Ok(Prompt {
        system_text,
        instruction_text,
        shot_blocks,
        scope_text,
        scope: Some(PromptScope {
            movie_id: movie.movie_id.clone(),
            context: window.context(),
            focus: window.focus(),
            scheme: opts.scheme,
            explain: opts.explain,
        }),
        rendered_text,
        template_sha256: template.sha256.clone(),
    })
}
