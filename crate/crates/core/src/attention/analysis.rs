use serde::{Deserialize, Serialize};

use super::dump::{AttentionDump, LabelClass, SpanMap};
use super::AttentionError;

/// One value per label class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassValues {
    pub visual: f64,
    pub subtitle: f64,
    pub actor: f64,
    pub output: f64,
    pub other: f64,
}

impl ClassValues {
    pub fn get(&self, class: LabelClass) -> f64 {
        match class {
            LabelClass::Visual => self.visual,
            LabelClass::Subtitle => self.subtitle,
            LabelClass::Actor => self.actor,
            LabelClass::Output => self.output,
            LabelClass::Other => self.other,
        }
    }

    pub fn get_mut(&mut self, class: LabelClass) -> &mut f64 {
        match class {
            LabelClass::Visual => &mut self.visual,
            LabelClass::Subtitle => &mut self.subtitle,
            LabelClass::Actor => &mut self.actor,
            LabelClass::Output => &mut self.output,
            LabelClass::Other => &mut self.other,
        }
    }

    pub fn total(&self) -> f64 {
        LabelClass::ALL.iter().map(|c| self.get(*c)).sum()
    }

    /// Values of `classes` divided by their sum; other classes are 0.
    fn normalized_over(&self, classes: &[LabelClass]) -> ClassValues {
        let sum: f64 = classes.iter().map(|c| self.get(*c)).sum();
        let mut out = ClassValues::default();
        if sum > 0.0 {
            for c in classes {
                *out.get_mut(*c) = self.get(*c) / sum;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityShares {
    /// Mean over layers, heads and queries of the summed weights per class.
    pub raw: ClassValues,
    /// `raw` renormalized over visual, subtitle, actor and output.
    pub shares: ClassValues,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanShares {
    /// Per-token mean weight of each input modality.
    pub per_token: ClassValues,
    /// `per_token` renormalized over the three input modalities.
    pub shares: ClassValues,
    pub token_counts: ClassValues,
}

fn check_queries(dump: &AttentionDump, spans: &SpanMap, queries: &[usize]) -> Result<(), AttentionError> {
    spans.validate(&dump.dims)?;
    if queries.is_empty() {
        return Err(AttentionError::EmptyQuerySet);
    }
    if let Some(q) = queries.iter().find(|q| **q >= dump.dims.queries) {
        return Err(AttentionError::DimensionMismatch(format!(
            "query {q} outside {} queries",
            dump.dims.queries
        )));
    }
    Ok(())
}

/// Per-class summed weight, averaged over layers and heads first and then
/// over `queries`.
fn class_sums(dump: &AttentionDump, spans: &SpanMap, queries: &[usize]) -> ClassValues {
    let classes = spans.key_classes(dump.dims.keys);
    let mut acc = ClassValues::default();
    for &q in queries {
        let row = dump.mean_row(q);
        for (w, c) in row.iter().zip(&classes) {
            *acc.get_mut(*c) += *w;
        }
    }
    let n = queries.len() as f64;
    for c in LabelClass::ALL {
        *acc.get_mut(c) /= n;
    }
    acc
}

pub fn modality_attention_sum(
    dump: &AttentionDump,
    spans: &SpanMap,
    queries: &[usize],
) -> Result<ModalityShares, AttentionError> {
    check_queries(dump, spans, queries)?;
    let raw = class_sums(dump, spans, queries);
    let shares = raw.normalized_over(&[
        LabelClass::Visual,
        LabelClass::Subtitle,
        LabelClass::Actor,
        LabelClass::Output,
    ]);
    Ok(ModalityShares { raw, shares })
}

/// Length-normalized attention: each input modality's summed weight divided
/// by its token count. Output tokens are left out.
pub fn modality_attention_mean(
    dump: &AttentionDump,
    spans: &SpanMap,
    queries: &[usize],
) -> Result<MeanShares, AttentionError> {
    check_queries(dump, spans, queries)?;
    let mut counts = ClassValues::default();
    for c in spans.key_classes(dump.dims.keys) {
        *counts.get_mut(c) += 1.0;
    }
    if let Some(c) = LabelClass::INPUTS.iter().find(|c| counts.get(**c) == 0.0) {
        return Err(AttentionError::EmptySpanClass(*c));
    }
    let sums = class_sums(dump, spans, queries);
    let mut per_token = ClassValues::default();
    for c in LabelClass::INPUTS {
        *per_token.get_mut(c) = sums.get(c) / counts.get(c);
    }
    Ok(MeanShares {
        per_token,
        shares: per_token.normalized_over(&LabelClass::INPUTS),
        token_counts: counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotRow {
    pub shot: usize,
    pub visual: f64,
    pub subtitle: f64,
    pub actor: f64,
}

impl ShotRow {
    pub fn total(&self) -> f64 {
        self.visual + self.subtitle + self.actor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerShotAttention {
    pub verdict_shot: usize,
    pub query: usize,
    pub rows: Vec<ShotRow>,
}

/// Attention from the verdict token of `shot` to every input shot, split by
/// modality and averaged over layers and heads.
pub fn per_shot_attention(
    dump: &AttentionDump,
    spans: &SpanMap,
    shot: usize,
) -> Result<PerShotAttention, AttentionError> {
    spans.validate(&dump.dims)?;
    let query = spans
        .verdict_query(shot)
        .ok_or(AttentionError::UnknownVerdictPosition(shot))?;
    let row = dump.mean_row(query);
    let shots = spans.shots();
    let mut rows: Vec<ShotRow> = shots
        .iter()
        .map(|s| ShotRow { shot: *s, visual: 0.0, subtitle: 0.0, actor: 0.0 })
        .collect();
    for span in &spans.spans {
        let Some(s) = span.shot else { continue };
        let idx = shots.binary_search(&s).expect("shot collected from spans");
        let mass: f64 = row[span.start..span.end].iter().sum();
        let r = &mut rows[idx];
        match span.label {
            LabelClass::Visual => r.visual += mass,
            LabelClass::Subtitle => r.subtitle += mass,
            LabelClass::Actor => r.actor += mass,
            LabelClass::Output | LabelClass::Other => {}
        }
    }
    Ok(PerShotAttention { verdict_shot: shot, query, rows })
}

/// Element-wise mean of per-shot distributions that share a layout (same
/// number of rows); rows are identified by position.
pub fn mean_per_shot(items: &[PerShotAttention]) -> Result<Vec<ShotRow>, AttentionError> {
    let first = items.first().ok_or(AttentionError::EmptyQuerySet)?;
    let n = first.rows.len();
    if let Some(bad) = items.iter().find(|i| i.rows.len() != n) {
        return Err(AttentionError::DimensionMismatch(format!(
            "{} rows vs {} rows",
            bad.rows.len(),
            n
        )));
    }
    let m = items.len() as f64;
    Ok((0..n)
        .map(|k| {
            let sum = |f: fn(&ShotRow) -> f64| items.iter().map(|i| f(&i.rows[k])).sum::<f64>() / m;
            ShotRow {
                shot: k,
                visual: sum(|r| r.visual),
                subtitle: sum(|r| r.subtitle),
                actor: sum(|r| r.actor),
            }
        })
        .collect())
}

/// Horizontal text bars, one per (label, value), scaled so 1.0 is `width`
/// characters.
pub fn render_bars(title: &str, rows: &[(&str, f64)], width: usize) -> String {
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    let mut out = format!("{title}\n");
    for (name, v) in rows {
        let len = (v.clamp(0.0, 1.0) * width as f64).round() as usize;
        out.push_str(&format!("{name:<name_w$} {v:>6.3} |{}\n", "#".repeat(len)));
    }
    out
}

pub fn render_sum_bars(s: &ModalityShares) -> String {
    render_bars(
        "Summed attention share",
        &[
            ("Visual", s.shares.visual),
            ("Subtitle", s.shares.subtitle),
            ("Actor", s.shares.actor),
            ("Output", s.shares.output),
        ],
        50,
    )
}

pub fn render_mean_bars(s: &MeanShares) -> String {
    render_bars(
        "Length-normalized attention share",
        &[
            ("Visual", s.shares.visual),
            ("Subtitle", s.shares.subtitle),
            ("Actor", s.shares.actor),
        ],
        50,
    )
}
