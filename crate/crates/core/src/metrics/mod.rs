//! Segmentation and chaptering metrics.

mod chapters;
mod plot;
mod position;
mod pr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::windowing::{plan_windows, window_positions, WindowPlanConfig};

pub use chapters::{
    chapter_f1, chapter_intervals, greedy_matches, interval_iou, tiou, DEFAULT_TOLERANCES_S,
};
pub use plot::{f1_sweep_svg, line_svg, position_csv, pr_csv, pr_svg};
pub use position::{f1_std_error, per_position_f1, OutlierRule, PositionReport, PositionSample};
pub use pr::{
    ap_from_curve, average_precision, best_f1, best_point, counts_at, harmonic_f1, pr_curve, Counts, PRPoint,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no positive labels")]
    NoPositives,
    #[error("{confidences} confidences but {labels} labels")]
    LengthMismatch { confidences: usize, labels: usize },
    #[error("confidence {index} is not finite ({value})")]
    InvalidConfidence { index: usize, value: f64 },
    #[error("focus position {0} has no samples")]
    EmptyPosition(usize),
    #[error("position {position} outside 0..{num_positions}")]
    PositionOutOfRange { position: usize, num_positions: usize },
    #[error("ground truth has no chapters")]
    EmptyGroundTruth,
    #[error("no matching tolerances given")]
    EmptyTolerances,
    #[error("video end {end_s} s does not follow the last chapter start {last_start_s} s")]
    InvalidVideoEnd { end_s: f64, last_start_s: f64 },
    #[error("movie {movie_id}: {source}")]
    Movie {
        movie_id: String,
        #[source]
        source: Box<MetricsError>,
    },
}

impl MetricsError {
    pub fn for_movie(self, movie_id: &str) -> Self {
        MetricsError::Movie {
            movie_id: movie_id.to_string(),
            source: Box::new(self),
        }
    }
}

/// Focus position (0..F-1) of every shot under the window plan.
pub fn focus_positions(num_shots: usize, cfg: &WindowPlanConfig) -> Vec<usize> {
    let mut pos = vec![0; num_shots];
    if let Ok(windows) = plan_windows("", num_shots, cfg) {
        for w in &windows {
            for (shot, k) in window_positions(w) {
                pos[shot] = k;
            }
        }
    }
    pos
}

/// One movie's predictions joined with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalInput {
    pub movie_id: String,
    pub confidences: Vec<f64>,
    pub labels: Vec<bool>,
    /// Focus position per shot, when per-position analysis is wanted.
    pub positions: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Decision threshold for the fixed-point and per-position numbers.
    pub threshold: f64,
    pub focus_len: Option<usize>,
    pub outlier_rule: OutlierRule,
    pub outlier_z: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            threshold: 0.5,
            focus_len: None,
            outlier_rule: OutlierRule::SamplingError,
            outlier_z: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_movies: usize,
    pub num_shots: usize,
    pub num_positives: usize,
    pub ap: f64,
    pub best_f1: f64,
    pub best_threshold: f64,
    pub threshold: f64,
    pub at_threshold: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_position: Option<PositionReport>,
    pub outlier_positions: Vec<usize>,
    pub pr_points: Vec<PRPoint>,
}

/// Pools all movies into one ranking and computes the report.
pub fn evaluate(inputs: &[EvalInput], opts: &EvalOptions) -> Result<EvalReport, MetricsError> {
    let mut conf = Vec::new();
    let mut labels = Vec::new();
    let mut samples = Vec::new();
    for m in inputs {
        if m.confidences.len() != m.labels.len() {
            return Err(MetricsError::LengthMismatch {
                confidences: m.confidences.len(),
                labels: m.labels.len(),
            }
            .for_movie(&m.movie_id));
        }
        if let Some(i) = m.confidences.iter().position(|c| !c.is_finite()) {
            return Err(MetricsError::InvalidConfidence { index: i, value: m.confidences[i] }
                .for_movie(&m.movie_id));
        }
        if let (Some(pos), Some(_)) = (&m.positions, opts.focus_len) {
            for ((p, c), l) in pos.iter().zip(&m.confidences).zip(&m.labels) {
                samples.push(PositionSample { position: *p, confidence: *c, label: *l });
            }
        }
        conf.extend_from_slice(&m.confidences);
        labels.extend_from_slice(&m.labels);
    }
    let points = pr_curve(&conf, &labels)?;
    let best = best_point(&points);
    let at = counts_at(&conf, &labels, opts.threshold);
    let per_position = match opts.focus_len {
        Some(f) if !samples.is_empty() => Some(per_position_f1(
            &samples,
            f,
            opts.threshold,
            opts.outlier_rule,
            opts.outlier_z,
        )?),
        _ => None,
    };
    Ok(EvalReport {
        num_movies: inputs.len(),
        num_shots: conf.len(),
        num_positives: labels.iter().filter(|l| **l).count(),
        ap: ap_from_curve(&points),
        best_f1: best.f1,
        best_threshold: best.threshold,
        threshold: opts.threshold,
        at_threshold: at,
        precision: at.precision(),
        recall: at.recall(),
        f1: harmonic_f1(at.precision(), at.recall()),
        outlier_positions: per_position.as_ref().map(|p| p.outliers.clone()).unwrap_or_default(),
        per_position,
        pr_points: points,
    })
}

/// Chaptering summary over a corpus: per-movie values and their means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterReport {
    pub tolerances_s: Vec<f64>,
    pub movies: Vec<ChapterScore>,
    pub mean_chapter_f1: f64,
    pub mean_tiou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterScore {
    pub movie_id: String,
    pub chapter_f1: f64,
    pub tiou: f64,
}

impl ChapterReport {
    pub fn new(tolerances_s: &[f64], movies: Vec<ChapterScore>) -> Self {
        let n = movies.len().max(1) as f64;
        ChapterReport {
            tolerances_s: tolerances_s.to_vec(),
            mean_chapter_f1: movies.iter().map(|m| m.chapter_f1).sum::<f64>() / n,
            mean_tiou: movies.iter().map(|m| m.tiou).sum::<f64>() / n,
            movies,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_corpus() {
        let inputs = vec![
            EvalInput {
                movie_id: "a".into(),
                confidences: vec![0.9, 0.1, 0.2],
                labels: vec![true, false, false],
                positions: Some(vec![0, 1, 0]),
            },
            EvalInput {
                movie_id: "b".into(),
                confidences: vec![0.3, 0.8],
                labels: vec![false, true],
                positions: Some(vec![1, 0]),
            },
        ];
        let opts = EvalOptions { focus_len: Some(2), ..Default::default() };
        let r = evaluate(&inputs, &opts).unwrap();
        assert_eq!((r.ap, r.best_f1, r.f1), (1.0, 1.0, 1.0));
        assert_eq!(r.num_shots, 5);
        assert!(r.outlier_positions.is_empty());
    }

    #[test]
    fn length_mismatch_names_the_movie() {
        let inputs = vec![EvalInput {
            movie_id: "bad".into(),
            confidences: vec![0.9],
            labels: vec![true, false],
            positions: None,
        }];
        let err = evaluate(&inputs, &EvalOptions::default()).unwrap_err();
        assert!(err.to_string().starts_with("movie bad:"));
    }

    #[test]
    fn positions_follow_window_plan() {
        let pos = focus_positions(25, &WindowPlanConfig::default());
        assert_eq!(&pos[..12], &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0, 1]);
        assert_eq!(pos[24], 4);
    }
}
