//! Movies, shots, windows and chapters, plus manifest ingestion.
//!
//! A manifest is one JSON file per movie. Frames are referenced by path
//! relative to the manifest's directory and are never opened here; they are
//! only decoded when a prompt is built.

use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One shot of a movie.
///
/// `boundary_label` marks the shot that *closes* a scene: a positive shot is
/// the last shot before a new scene begins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub shot_id: usize,
    #[serde(rename = "frames")]
    pub frame_refs: Vec<String>,
    #[serde(rename = "subtitle", default)]
    pub subtitle_text: String,
    #[serde(rename = "actors", default)]
    pub actor_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_s: Option<f64>,
    #[serde(
        rename = "is_scene_end",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub boundary_label: Option<bool>,
}

impl Shot {
    pub fn has_time_range(&self) -> bool {
        self.start_s.is_some() && self.end_s.is_some()
    }
}

/// A validated movie. Build one with [`Movie::new`] or [`load_manifest`].
#[derive(Debug, Clone, PartialEq)]
pub struct Movie {
    pub movie_id: String,
    pub shots: Vec<Shot>,
    pub has_labels: bool,
}

#[derive(Serialize, Deserialize)]
struct ManifestRepr {
    movie_id: String,
    shots: Vec<Shot>,
}

impl Movie {
    /// Validates the shot list for segmentation use and computes `has_labels`.
    pub fn new(movie_id: impl Into<String>, shots: Vec<Shot>) -> Result<Self, ManifestError> {
        let has_labels = !shots.is_empty() && shots.iter().all(|s| s.boundary_label.is_some());
        let movie = Movie {
            movie_id: movie_id.into(),
            shots,
            has_labels,
        };
        if let Some(issue) = validate_movie(&movie, ValidationMode::Segmentation)
            .into_iter()
            .next()
        {
            return Err(ManifestError::Invariant(issue));
        }
        Ok(movie)
    }

    pub fn num_shots(&self) -> usize {
        self.shots.len()
    }

    /// Boundary labels, or `None` when the movie is unlabeled.
    pub fn labels(&self) -> Option<Vec<bool>> {
        if !self.has_labels {
            return None;
        }
        Some(
            self.shots
                .iter()
                .map(|s| s.boundary_label.unwrap_or(false))
                .collect(),
        )
    }

    pub fn has_timestamps(&self) -> bool {
        self.shots.iter().all(Shot::has_time_range)
    }

    /// End time of the last shot, when timestamps are present.
    pub fn end_s(&self) -> Option<f64> {
        self.shots.last().and_then(|s| s.end_s)
    }

    pub fn to_manifest_json(&self) -> String {
        let repr = ManifestRepr {
            movie_id: self.movie_id.clone(),
            shots: self.shots.clone(),
        };
        serde_json::to_string_pretty(&repr).expect("manifest serialization is infallible")
    }
}

/// A context span of shots with an interior focus span; one backend call.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextWindow {
    pub movie_id: String,
    pub context_start: usize,
    pub context_end: usize,
    pub focus_start: usize,
    pub focus_end: usize,
}

impl ContextWindow {
    pub fn context(&self) -> Range<usize> {
        self.context_start..self.context_end
    }

    pub fn focus(&self) -> Range<usize> {
        self.focus_start..self.focus_end
    }

    pub fn focus_ids(&self) -> Vec<usize> {
        self.focus().collect()
    }

    pub fn focus_len(&self) -> usize {
        self.focus_end - self.focus_start
    }

    pub fn context_len(&self) -> usize {
        self.context_end - self.context_start
    }

    /// Stable identifier used to match responses to windows.
    pub fn id(&self) -> String {
        format!("{}:{}-{}", self.movie_id, self.focus_start, self.focus_end)
    }

    pub fn is_valid(&self) -> bool {
        self.focus_start < self.focus_end
            && self.context_start <= self.focus_start
            && self.focus_end <= self.context_end
    }
}

/// A chapter start with its title.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chapter {
    pub start_s: f64,
    pub title: String,
}

impl Chapter {
    pub fn new(start_s: f64, title: impl Into<String>) -> Result<Self, ManifestError> {
        let title = title.into();
        if !start_s.is_finite() || start_s < 0.0 {
            return Err(ManifestError::Invariant(Issue::NegativeTime { shot_id: None }));
        }
        if title.trim().is_empty() {
            return Err(ManifestError::Invariant(Issue::EmptyChapterTitle));
        }
        Ok(Chapter { start_s, title })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationMode {
    Segmentation,
    Chaptering,
}

/// A violated invariant. `validate_movie` reports these as data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Issue {
    EmptyMovie,
    NonConsecutiveShotId { expected: usize, found: usize },
    EmptyFrames { shot_id: usize },
    ReversedTimeRange { shot_id: usize },
    PartialTimeRange { shot_id: usize },
    NegativeTime { shot_id: Option<usize> },
    DecreasingTimestamps { shot_id: usize },
    PartialLabels { unlabeled: usize },
    MissingTimestamps { count: usize },
    EmptyChapterTitle,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::EmptyMovie => write!(f, "movie has no shots"),
            Issue::NonConsecutiveShotId { expected, found } => {
                write!(f, "non-consecutive shot id: expected {expected}, found {found}")
            }
            Issue::EmptyFrames { shot_id } => write!(f, "shot {shot_id} has no frames"),
            Issue::ReversedTimeRange { shot_id } => {
                write!(f, "shot {shot_id} ends before it starts")
            }
            Issue::PartialTimeRange { shot_id } => {
                write!(f, "shot {shot_id} has only one of start_s/end_s")
            }
            Issue::NegativeTime { shot_id: Some(id) } => {
                write!(f, "shot {id} has a negative or non-finite timestamp")
            }
            Issue::NegativeTime { shot_id: None } => {
                write!(f, "negative or non-finite timestamp")
            }
            Issue::DecreasingTimestamps { shot_id } => {
                write!(f, "shot {shot_id} starts before the previous shot")
            }
            Issue::PartialLabels { unlabeled } => {
                write!(f, "{unlabeled} shots lack is_scene_end while others have it")
            }
            Issue::MissingTimestamps { count } => {
                write!(f, "{count} shots lack timestamps required for chaptering")
            }
            Issue::EmptyChapterTitle => write!(f, "chapter title is empty"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error in {path}: {source}")]
    Schema {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid movie: {0}")]
    Invariant(Issue),
}

/// Checks every typed invariant; `mode` adds the chaptering requirements.
pub fn validate_movie(movie: &Movie, mode: ValidationMode) -> Vec<Issue> {
    let mut issues = Vec::new();
    if movie.shots.is_empty() {
        issues.push(Issue::EmptyMovie);
        return issues;
    }

    let mut prev_start: Option<f64> = None;
    let mut missing_times = 0;
    let mut labeled = 0;
    for (idx, shot) in movie.shots.iter().enumerate() {
        if shot.shot_id != idx {
            issues.push(Issue::NonConsecutiveShotId {
                expected: idx,
                found: shot.shot_id,
            });
        }
        if shot.frame_refs.is_empty() {
            issues.push(Issue::EmptyFrames { shot_id: shot.shot_id });
        }
        if shot.boundary_label.is_some() {
            labeled += 1;
        }
        match (shot.start_s, shot.end_s) {
            (Some(start), Some(end)) => {
                if !(start >= 0.0 && end.is_finite() && start.is_finite()) {
                    issues.push(Issue::NegativeTime {
                        shot_id: Some(shot.shot_id),
                    });
                } else if end < start {
                    issues.push(Issue::ReversedTimeRange { shot_id: shot.shot_id });
                }
                if let Some(prev) = prev_start {
                    if start < prev {
                        issues.push(Issue::DecreasingTimestamps { shot_id: shot.shot_id });
                    }
                }
                prev_start = Some(start);
            }
            (None, None) => missing_times += 1,
            _ => {
                missing_times += 1;
                issues.push(Issue::PartialTimeRange { shot_id: shot.shot_id });
            }
        }
    }
    if labeled != 0 && labeled != movie.shots.len() {
        issues.push(Issue::PartialLabels {
            unlabeled: movie.shots.len() - labeled,
        });
    }
    if mode == ValidationMode::Chaptering && missing_times > 0 {
        issues.push(Issue::MissingTimestamps {
            count: missing_times,
        });
    }
    issues
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Movie, ManifestError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&bytes).map_err(|err| match err {
        ManifestError::Schema { source, .. } => ManifestError::Schema {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn parse_manifest(bytes: &[u8]) -> Result<Movie, ManifestError> {
    let repr: ManifestRepr =
        serde_json::from_slice(bytes).map_err(|source| ManifestError::Schema {
            path: PathBuf::new(),
            source,
        })?;
    Movie::new(repr.movie_id, repr.shots)
}

pub fn save_manifest(movie: &Movie, path: impl AsRef<Path>) -> Result<(), ManifestError> {
    let path = path.as_ref();
    fs::write(path, movie.to_manifest_json()).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Serialize, Deserialize)]
struct ChaptersRepr {
    chapters: Vec<Chapter>,
}

/// Reads a ground-truth chapter file: `{"chapters": [{"start_s", "title"}]}`.
/// Chapters come back sorted by start time.
pub fn load_chapters(path: impl AsRef<Path>) -> Result<Vec<Chapter>, ManifestError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let repr: ChaptersRepr =
        serde_json::from_slice(&bytes).map_err(|source| ManifestError::Schema {
            path: path.to_path_buf(),
            source,
        })?;
    let mut chapters = repr
        .chapters
        .into_iter()
        .map(|c| Chapter::new(c.start_s, c.title))
        .collect::<Result<Vec<_>, _>>()?;
    chapters.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    Ok(chapters)
}

pub fn chapters_to_json(chapters: &[Chapter]) -> String {
    serde_json::to_string_pretty(&ChaptersRepr {
        chapters: chapters.to_vec(),
    })
    .expect("chapter serialization is infallible")
}
