use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn check(confidences: &[f64], labels: &[bool]) -> Result<usize, MetricsError> {
    if confidences.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            confidences: confidences.len(),
            labels: labels.len(),
        });
    }
    if let Some(i) = confidences.iter().position(|c| !c.is_finite()) {
        return Err(MetricsError::InvalidConfidence { index: i, value: confidences[i] });
    }
    let positives = labels.iter().filter(|l| **l).count();
    if positives == 0 {
        return Err(MetricsError::NoPositives);
    }
    Ok(positives)
}

/// One point per distinct confidence, used as threshold with
/// `confidence >= threshold` predicting positive. Sorted by ascending
/// threshold.
pub fn pr_curve(confidences: &[f64], labels: &[bool]) -> Result<Vec<PRPoint>, MetricsError> {
    let positives = check(confidences, labels)?;
    let mut order: Vec<usize> = (0..confidences.len()).collect();
    order.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = confidences[order[i]];
        while i < order.len() && confidences[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / positives as f64;
        points.push(PRPoint {
            threshold,
            precision,
            recall,
            f1: harmonic_f1(precision, recall),
            tp,
            fp,
            fn_: positives - tp,
        });
    }
    points.reverse();
    Ok(points)
}

/// Non-interpolated step sum of precision over recall increments, walking
/// thresholds from high to low.
pub fn average_precision(confidences: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    Ok(ap_from_curve(&pr_curve(confidences, labels)?))
}

pub fn ap_from_curve(points: &[PRPoint]) -> f64 {
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for p in points.iter().rev() {
        ap += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    ap
}

/// Highest F1 over the curve; ties go to the larger threshold.
pub fn best_f1(confidences: &[f64], labels: &[bool]) -> Result<(f64, f64), MetricsError> {
    let points = pr_curve(confidences, labels)?;
    let best = best_point(&points);
    Ok((best.f1, best.threshold))
}

pub fn best_point(points: &[PRPoint]) -> PRPoint {
    let mut best = points[0];
    for p in &points[1..] {
        if p.f1 >= best.f1 {
            best = *p;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Counts {
    pub fn add(&mut self, predicted: bool, label: bool) {
        match (predicted, label) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    /// `2tp / (2tp + fp + fn)`; 1 when there is nothing to find and nothing
    /// was predicted.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

pub fn counts_at(confidences: &[f64], labels: &[bool], threshold: f64) -> Counts {
    let mut c = Counts::default();
    for (conf, label) in confidences.iter().zip(labels) {
        c.add(*conf >= threshold, *label);
    }
    c
}
