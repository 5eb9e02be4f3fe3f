use super::MetricsError;
use crate::model::Chapter;

pub const DEFAULT_TOLERANCES_S: [f64; 3] = [3.0, 5.0, 10.0];

/// Number of one-to-one matches between boundary times, pairing greedily by
/// smallest absolute difference not exceeding `tolerance`.
pub fn greedy_matches(pred: &[f64], gt: &[f64], tolerance: f64) -> usize {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let d = (p - g).abs();
            if d <= tolerance {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; pred.len()];
    let mut used_g = vec![false; gt.len()];
    let mut matches = 0;
    for (_, i, j) in pairs {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            matches += 1;
        }
    }
    matches
}

/// Boundary F1 on chapter start times, averaged over the tolerances.
pub fn chapter_f1(pred: &[Chapter], gt: &[Chapter], tolerances_s: &[f64]) -> Result<f64, MetricsError> {
    if gt.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }
    if tolerances_s.is_empty() {
        return Err(MetricsError::EmptyTolerances);
    }
    let p: Vec<f64> = pred.iter().map(|c| c.start_s).collect();
    let g: Vec<f64> = gt.iter().map(|c| c.start_s).collect();
    let total: f64 = tolerances_s
        .iter()
        .map(|&t| {
            let m = greedy_matches(&p, &g, t) as f64;
            2.0 * m / (p.len() + g.len()) as f64
        })
        .sum();
    Ok(total / tolerances_s.len() as f64)
}

/// Half-open intervals from successive starts; the last ends at `end_s`.
pub fn chapter_intervals(chapters: &[Chapter], end_s: f64) -> Vec<(f64, f64)> {
    chapters
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let end = chapters.get(i + 1).map_or(end_s, |n| n.start_s);
            (c.start_s, end)
        })
        .collect()
}

pub fn interval_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Mean over ground-truth chapters of the best IoU against any predicted
/// chapter.
pub fn tiou(pred: &[Chapter], gt: &[Chapter], video_end_s: f64) -> Result<f64, MetricsError> {
    if gt.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }
    let last = pred.iter().chain(gt).map(|c| c.start_s).fold(f64::NEG_INFINITY, f64::max);
    if video_end_s.is_nan() || video_end_s <= last {
        return Err(MetricsError::InvalidVideoEnd { end_s: video_end_s, last_start_s: last });
    }
    let p = chapter_intervals(pred, video_end_s);
    let g = chapter_intervals(gt, video_end_s);
    let total: f64 = g
        .iter()
        .map(|gi| p.iter().map(|pi| interval_iou(*pi, *gi)).fold(0.0, f64::max))
        .sum();
    Ok(total / g.len() as f64)
}
