//! Offline attention-share analysis over serialized attention dumps.

mod analysis;
mod dump;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{
    mean_per_shot, modality_attention_mean, modality_attention_sum, per_shot_attention, render_bars,
    render_mean_bars, render_sum_bars, ClassValues, MeanShares, ModalityShares, PerShotAttention, ShotRow,
};
pub use dump::{
    decode_dump, encode_dump, read_dump, write_dump, AttentionDims, AttentionDump, LabelClass, Span, SpanMap,
    VerdictQuery,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttentionError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid span: {0}")]
    InvalidSpan(String),
    #[error("weight {index} is negative or not finite ({value})")]
    InvalidWeight { index: usize, value: f32 },
    #[error("row (layer {layer}, head {head}, query {query}) sums to {sum}")]
    RowNotNormalized { layer: usize, head: usize, query: usize, sum: f64 },
    #[error("no tokens carry the {0:?} label")]
    EmptySpanClass(LabelClass),
    #[error("no verdict query recorded for shot {0}")]
    UnknownVerdictPosition(usize),
    #[error("query set is empty")]
    EmptyQuerySet,
    #[error("malformed dump: {0}")]
    Format(String),
    #[error("cannot access {path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// Everything the report command emits for one dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionReport {
    pub queries: Vec<usize>,
    pub sum: ModalityShares,
    pub mean: MeanShares,
    pub per_shot: Vec<PerShotAttention>,
}

/// Analyses a dump over its verdict queries (all queries when none are
/// recorded).
pub fn attention_report(dump: &AttentionDump, spans: &SpanMap, row_tol: f64) -> Result<AttentionReport, AttentionError> {
    dump.check_rows(row_tol)?;
    let queries: Vec<usize> = if spans.verdict_queries.is_empty() {
        (0..dump.dims.queries).collect()
    } else {
        spans.verdict_queries.iter().map(|v| v.query).collect()
    };
    let per_shot = spans
        .verdict_queries
        .iter()
        .map(|v| per_shot_attention(dump, spans, v.shot))
        .collect::<Result<_, _>>()?;
    Ok(AttentionReport {
        sum: modality_attention_sum(dump, spans, &queries)?,
        mean: modality_attention_mean(dump, spans, &queries)?,
        queries,
        per_shot,
    })
}

impl AttentionReport {
    pub fn shares_csv(&self) -> String {
        let mut out = String::from("class,raw_sum,sum_share,per_token_mean,mean_share,tokens\n");
        for c in LabelClass::ALL {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.name(),
                self.sum.raw.get(c),
                self.sum.shares.get(c),
                self.mean.per_token.get(c),
                self.mean.shares.get(c),
                self.mean.token_counts.get(c)
            ));
        }
        out
    }

    pub fn per_shot_csv(&self) -> String {
        let mut out = String::from("verdict_shot,shot,visual,subtitle,actor,total\n");
        for p in &self.per_shot {
            for r in &p.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    p.verdict_shot,
                    r.shot,
                    r.visual,
                    r.subtitle,
                    r.actor,
                    r.total()
                ));
            }
        }
        out
    }
}
