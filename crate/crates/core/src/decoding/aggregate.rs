use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::confidence::{Quality, ShotVerdict};
use super::{FailureReason, ParseFailure};
use crate::model::ContextWindow;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionError {
    #[error("window {window} overlaps an earlier focus span")]
    Overlap { window: String },
    #[error("shots {start}..{end} are not covered by any focus span")]
    Gap { start: usize, end: usize },
    #[error("window {window} extends past the movie ({num_shots} shots)")]
    OutOfRange { window: String, num_shots: usize },
}

/// Parsed output of one window.
#[derive(Debug, Clone)]
pub struct WindowResult {
    pub window: ContextWindow,
    pub verdicts: Vec<ShotVerdict>,
    pub failures: Vec<ParseFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoviePrediction {
    pub movie_id: String,
    pub verdicts: Vec<ShotVerdict>,
    pub failures: Vec<ParseFailure>,
    /// Shots that had no verdict after parsing.
    pub defaulted: Vec<usize>,
}

impl MoviePrediction {
    pub fn confidences(&self) -> Vec<f64> {
        self.verdicts.iter().map(|v| v.confidence).collect()
    }

    pub fn decisions(&self) -> Vec<bool> {
        self.verdicts.iter().map(|v| v.decision).collect()
    }

    pub fn num_shots(&self) -> usize {
        self.verdicts.len()
    }
}

/// Reduces window results into one verdict per shot. Focus spans must
/// partition `[0, num_shots)`; verdicts outside their window's focus are
/// discarded as unexpected.
pub fn assemble_movie(
    movie_id: &str,
    mut windows: Vec<WindowResult>,
    num_shots: usize,
) -> Result<MoviePrediction, PartitionError> {
    windows.sort_by_key(|w| w.window.focus_start);
    let mut next = 0;
    for w in &windows {
        if w.window.focus_end > num_shots {
            return Err(PartitionError::OutOfRange {
                window: w.window.id(),
                num_shots,
            });
        }
        if w.window.focus_start < next || w.window.focus_end <= w.window.focus_start {
            return Err(PartitionError::Overlap { window: w.window.id() });
        }
        if w.window.focus_start > next {
            return Err(PartitionError::Gap {
                start: next,
                end: w.window.focus_start,
            });
        }
        next = w.window.focus_end;
    }
    if next < num_shots {
        return Err(PartitionError::Gap { start: next, end: num_shots });
    }

    let mut slots: Vec<Option<ShotVerdict>> = vec![None; num_shots];
    let mut failures = Vec::new();
    for w in windows {
        let id = w.window.id();
        let focus = w.window.focus();
        failures.extend(w.failures);
        for v in w.verdicts {
            if !focus.contains(&v.shot_id) {
                failures.push(ParseFailure {
                    window: id.clone(),
                    shot_id: Some(v.shot_id),
                    line: String::new(),
                    reason: FailureReason::UnexpectedId,
                });
            } else if slots[v.shot_id].is_none() {
                slots[v.shot_id] = Some(v);
            }
        }
        for shot in focus {
            if slots[shot].is_none() {
                let recorded = failures.iter().any(|f| {
                    f.window == id && f.shot_id == Some(shot) && f.reason == FailureReason::Missing
                });
                if !recorded {
                    failures.push(ParseFailure {
                        window: id.clone(),
                        shot_id: Some(shot),
                        line: String::new(),
                        reason: FailureReason::Missing,
                    });
                }
            }
        }
    }
    let mut defaulted = Vec::new();
    let verdicts = slots
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.unwrap_or_else(|| {
                defaulted.push(i);
                ShotVerdict::defaulted(i)
            })
        })
        .collect();
    Ok(MoviePrediction {
        movie_id: movie_id.to_string(),
        verdicts,
        failures,
        defaulted,
    })
}

/// The per-movie prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDump {
    pub movie_id: String,
    pub scheme: String,
    pub context_len: usize,
    pub focus_len: usize,
    pub confidences: Vec<f64>,
    pub decisions: Vec<bool>,
    #[serde(default)]
    pub quality: Vec<Quality>,
    #[serde(default)]
    pub failures: Vec<ParseFailure>,
}

impl PredictionDump {
    pub fn new(pred: &MoviePrediction, scheme: &str, context_len: usize, focus_len: usize) -> Self {
        PredictionDump {
            movie_id: pred.movie_id.clone(),
            scheme: scheme.to_string(),
            context_len,
            focus_len,
            confidences: pred.confidences(),
            decisions: pred.decisions(),
            quality: pred.verdicts.iter().map(|v| v.quality).collect(),
            failures: pred.failures.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("dump serializes");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::windowing::{plan_windows, WindowPlanConfig};
    use proptest::prelude::*;

    fn window(fs: usize, fe: usize) -> ContextWindow {
        ContextWindow {
            movie_id: "m".into(),
            context_start: fs,
            context_end: fe,
            focus_start: fs,
            focus_end: fe,
        }
    }

    fn full(w: ContextWindow) -> WindowResult {
        let verdicts = w.focus().map(|i| ShotVerdict::hard(i, i % 3 == 0, Quality::Ok)).collect();
        WindowResult { window: w, verdicts, failures: vec![] }
    }

    #[test]
    fn two_full_windows() {
        let p = assemble_movie("m", vec![full(window(10, 20)), full(window(0, 10))], 20).unwrap();
        assert_eq!(p.num_shots(), 20);
        assert!(p.defaulted.is_empty());
        assert!(p.verdicts.iter().enumerate().all(|(i, v)| v.shot_id == i));
    }

    #[test]
    fn missing_verdict_is_defaulted_and_recorded() {
        let mut w = full(window(0, 10));
        w.verdicts.retain(|v| v.shot_id != 4);
        let p = assemble_movie("m", vec![w, full(window(10, 20))], 20).unwrap();
        assert_eq!(p.defaulted, vec![4]);
        assert_eq!(p.verdicts[4].confidence, 0.0);
        assert!(!p.verdicts[4].decision);
        assert_eq!(p.verdicts[4].quality, Quality::Defaulted);
        assert_eq!(p.failures.len(), 1);
        assert_eq!(p.failures[0].reason, FailureReason::Missing);
    }

    #[test]
    fn partition_errors() {
        assert!(matches!(
            assemble_movie("m", vec![full(window(0, 10)), full(window(5, 15))], 15),
            Err(PartitionError::Overlap { .. })
        ));
        assert!(matches!(
            assemble_movie("m", vec![full(window(0, 10)), full(window(12, 20))], 20),
            Err(PartitionError::Gap { start: 10, end: 12 })
        ));
        assert!(matches!(
            assemble_movie("m", vec![full(window(0, 10))], 12),
            Err(PartitionError::Gap { start: 10, end: 12 })
        ));
        assert!(matches!(
            assemble_movie("m", vec![full(window(0, 10))], 8),
            Err(PartitionError::OutOfRange { .. })
        ));
    }

    #[test]
    fn dump_roundtrip() {
        let p = assemble_movie("m", vec![full(window(0, 10))], 10).unwrap();
        let d = PredictionDump::new(&p, "comprehensive", 20, 10);
        assert_eq!(PredictionDump::from_json(d.to_json().as_bytes()).unwrap(), d);
    }

    proptest! {
        #[test]
        fn every_plan_aggregates_totally(n in 1usize..3000, f in 1usize..40, extra in 0usize..24) {
            let cfg = WindowPlanConfig::new(f + extra, f).unwrap();
            let windows = plan_windows("m", n, &cfg).unwrap();
            let results = windows.into_iter().map(full).collect();
            let p = assemble_movie("m", results, n).unwrap();
            prop_assert_eq!(p.num_shots(), n);
            prop_assert!(p.verdicts.iter().enumerate().all(|(i, v)| v.shot_id == i));
            prop_assert!(p.defaulted.is_empty());
        }
    }
}
