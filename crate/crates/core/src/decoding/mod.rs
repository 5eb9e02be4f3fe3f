//! Output grammars, Yes/No confidence extraction and movie-level
//! aggregation of window verdicts.

mod aggregate;
mod confidence;
mod parse;

use serde::{Deserialize, Serialize};

pub use aggregate::{assemble_movie, MoviePrediction, PartitionError, PredictionDump, WindowResult};
pub use confidence::{
    confidence_from_probs, repeated_sampling_confidence, verdict_from_draft, yes_no_probs,
    ConfidenceError, Quality, ShotVerdict, YesNoProbs,
};
pub use parse::{
    format_chapters, format_comprehensive, format_concise, format_rationale, parse_chapters,
    parse_comprehensive, parse_concise, parse_rationales, rationale_map, ChapterParse, LineStats,
    RationaleParse, VerdictDraft, VerdictParse,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Malformed,
    Duplicate,
    UnexpectedId,
    Missing,
    NonMonotone,
}

/// A line the parsers could not use, or an expected shot with no line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub window: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot_id: Option<usize>,
    pub line: String,
    pub reason: FailureReason,
}

impl ParseFailure {
    /// Non-blank input lines this record stands for (0 for `Missing`).
    pub fn lines_covered(&self) -> usize {
        self.line.split('\n').filter(|l| !l.trim().is_empty()).count()
    }
}
