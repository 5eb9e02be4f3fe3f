use serde::{Deserialize, Serialize};

use super::pr::Counts;
use super::MetricsError;

/// How per-position F1 values are tested for outliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutlierRule {
    /// `|F1_k - median| > z * SE_k`, with `SE_k` the sampling standard error
    /// of position k's F1.
    #[default]
    SamplingError,
    /// `|F1_k - mean| > z * std` over the per-position values. With n
    /// positions no value can sit further than `sqrt(n - 1)` population
    /// standard deviations from the mean, so for n <= 10 and z = 3 this rule
    /// cannot fire.
    SpreadMeanStd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionSample {
    pub position: usize,
    pub confidence: f64,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionReport {
    pub threshold: f64,
    pub rule: OutlierRule,
    pub z: f64,
    pub f1: Vec<f64>,
    pub std_error: Vec<f64>,
    pub counts: Vec<Counts>,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub outliers: Vec<usize>,
}

/// Delta-method standard error of `F1 = sum(a) / sum(b)` with per-sample
/// `a = 2tp` and `b = 2tp + fp + fn`. Half a pseudo-count is added to both
/// `tp` and `fp + fn` so that perfect or empty positions on few samples do
/// not get a zero error; positions with no positives or predictions at all
/// still return 0.
pub fn f1_std_error(c: &Counts) -> f64 {
    if c.tp + c.fp + c.fn_ == 0 {
        return 0.0;
    }
    let (t, e) = (c.tp as f64 + 0.5, (c.fp + c.fn_) as f64 + 0.5);
    let b = 2.0 * t + e;
    let r = 2.0 * t / b;
    let var = (t * (2.0 - 2.0 * r).powi(2) + e * r * r) / (b * b);
    var.sqrt()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// F1 at `threshold` for each focus position, and the positions that stand
/// out under `rule` at `z` deviations.
pub fn per_position_f1(
    samples: &[PositionSample],
    num_positions: usize,
    threshold: f64,
    rule: OutlierRule,
    z: f64,
) -> Result<PositionReport, MetricsError> {
    let mut counts = vec![Counts::default(); num_positions];
    let mut seen = vec![false; num_positions];
    for s in samples {
        if s.position >= num_positions {
            return Err(MetricsError::PositionOutOfRange {
                position: s.position,
                num_positions,
            });
        }
        counts[s.position].add(s.confidence >= threshold, s.label);
        seen[s.position] = true;
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(MetricsError::EmptyPosition(k));
    }
    let f1: Vec<f64> = counts.iter().map(Counts::f1).collect();
    let std_error: Vec<f64> = counts.iter().map(f1_std_error).collect();
    let n = f1.len() as f64;
    let mean = f1.iter().sum::<f64>() / n;
    let std = (f1.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let med = median(&f1);
    let outliers = (0..num_positions)
        .filter(|&k| match rule {
            OutlierRule::SpreadMeanStd => (f1[k] - mean).abs() > z * std,
            OutlierRule::SamplingError => {
                let dev = (f1[k] - med).abs();
                // zero error means no positives and no predictions: no evidence
                std_error[k] > 0.0 && dev > z * std_error[k]
            }
        })
        .collect();
    Ok(PositionReport {
        threshold,
        rule,
        z,
        f1,
        std_error,
        counts,
        mean,
        std,
        median: med,
        outliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(per_pos: &[(usize, usize, usize, usize)]) -> Vec<PositionSample> {
        // (tp, fp, fn, tn) per position
        let mut out = Vec::new();
        for (k, &(tp, fp, fn_, tn)) in per_pos.iter().enumerate() {
            let mut push = |count: usize, conf: f64, label: bool| {
                for _ in 0..count {
                    out.push(PositionSample { position: k, confidence: conf, label });
                }
            };
            push(tp, 0.9, true);
            push(fp, 0.9, false);
            push(fn_, 0.1, true);
            push(tn, 0.1, false);
        }
        out
    }

    #[test]
    fn all_correct_has_no_outliers() {
        let s = samples(&[(10, 0, 0, 90); 10]);
        for rule in [OutlierRule::SamplingError, OutlierRule::SpreadMeanStd] {
            let r = per_position_f1(&s, 10, 0.5, rule, 3.0).unwrap();
            assert!(r.f1.iter().all(|f| *f == 1.0));
            assert!(r.outliers.is_empty());
        }
    }

    #[test]
    fn collapsed_edges_are_flagged_by_sampling_rule() {
        let mut per = vec![(900, 100, 100, 8900); 10];
        per[0] = (300, 700, 700, 8300);
        per[9] = (300, 700, 700, 8300);
        let s = samples(&per);
        let r = per_position_f1(&s, 10, 0.5, OutlierRule::SamplingError, 3.0).unwrap();
        assert_eq!(r.outliers, vec![0, 9]);
        // the spread rule is bounded by sqrt(n - 1) = 3 and stays silent
        let r = per_position_f1(&s, 10, 0.5, OutlierRule::SpreadMeanStd, 3.0).unwrap();
        assert!(r.outliers.is_empty());
        let max_z = r.f1.iter().map(|f| (f - r.mean).abs() / r.std).fold(0.0, f64::max);
        assert!(max_z <= 3.0 + 1e-12);
    }

    #[test]
    fn small_perfect_positions_are_not_outliers() {
        let per: Vec<_> = (0..10).map(|k| if k % 2 == 0 { (2, 0, 0, 10) } else { (2, 1, 0, 9) }).collect();
        let r = per_position_f1(&samples(&per), 10, 0.5, OutlierRule::SamplingError, 3.0).unwrap();
        assert!(r.std_error.iter().all(|se| *se > 0.0));
        assert!(r.outliers.is_empty(), "{:?}", r.outliers);
    }

    #[test]
    fn spread_rule_fires_with_enough_positions() {
        let mut per = vec![(50, 0, 0, 50); 30];
        per[4] = (0, 50, 50, 0);
        let r = per_position_f1(&samples(&per), 30, 0.5, OutlierRule::SpreadMeanStd, 3.0).unwrap();
        assert_eq!(r.outliers, vec![4]);
    }

    #[test]
    fn std_error_matches_resampling_scale() {
        let c = Counts { tp: 900, fp: 100, fn_: 100, tn: 0 };
        let se = f1_std_error(&c);
        // F1 = 0.9; binomial-style scale sqrt(F1 (1 - F1) / n_terms) is of the same order
        assert!(se > 0.003 && se < 0.02, "{se}");
        assert_eq!(f1_std_error(&Counts::default()), 0.0);
    }

    #[test]
    fn empty_position_is_an_error() {
        let s = samples(&[(1, 0, 0, 1), (0, 0, 0, 0), (1, 0, 0, 1)]);
        assert_eq!(per_position_f1(&s, 3, 0.5, OutlierRule::default(), 3.0), Err(MetricsError::EmptyPosition(1)));
    }
}
