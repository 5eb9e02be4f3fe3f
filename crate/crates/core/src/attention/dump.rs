//! Attention dump files: an 8-byte little-endian header length, a JSON
//! header with dimensions and the span map, then `layers * heads * queries *
//! keys` little-endian f32 weights in row-major order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AttentionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionDims {
    pub layers: usize,
    pub heads: usize,
    pub queries: usize,
    pub keys: usize,
}

impl AttentionDims {
    pub fn len(&self) -> usize {
        self.layers * self.heads * self.queries * self.keys
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDump {
    pub dims: AttentionDims,
    pub weights: Vec<f32>,
}

impl AttentionDump {
    pub fn new(dims: AttentionDims, weights: Vec<f32>) -> Result<Self, AttentionError> {
        if dims.layers == 0 || dims.heads == 0 || dims.queries == 0 || dims.keys == 0 {
            return Err(AttentionError::DimensionMismatch(format!("empty dimension in {dims:?}")));
        }
        if weights.len() != dims.len() {
            return Err(AttentionError::DimensionMismatch(format!(
                "{} weights for dims {:?}",
                weights.len(),
                dims
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(AttentionError::InvalidWeight { index: i, value: weights[i] });
        }
        Ok(AttentionDump { dims, weights })
    }

    pub fn row(&self, layer: usize, head: usize, query: usize) -> &[f32] {
        let d = &self.dims;
        let start = ((layer * d.heads + head) * d.queries + query) * d.keys;
        &self.weights[start..start + d.keys]
    }

    /// Checks that every (layer, head, query) row sums to 1 within `tol`.
    pub fn check_rows(&self, tol: f64) -> Result<(), AttentionError> {
        let d = self.dims;
        for l in 0..d.layers {
            for h in 0..d.heads {
                for q in 0..d.queries {
                    let sum: f64 = self.row(l, h, q).iter().map(|w| *w as f64).sum();
                    if (sum - 1.0).abs() > tol {
                        return Err(AttentionError::RowNotNormalized { layer: l, head: h, query: q, sum });
                    }
                }
            }
        }
        Ok(())
    }

    /// Weights averaged over layers and heads for one query.
    pub fn mean_row(&self, query: usize) -> Vec<f64> {
        let d = self.dims;
        let mut acc = vec![0.0f64; d.keys];
        for l in 0..d.layers {
            for h in 0..d.heads {
                for (a, w) in acc.iter_mut().zip(self.row(l, h, query)) {
                    *a += *w as f64;
                }
            }
        }
        let n = (d.layers * d.heads) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelClass {
    Visual,
    Subtitle,
    Actor,
    Output,
    Other,
}

impl LabelClass {
    pub const ALL: [LabelClass; 5] = [
        LabelClass::Visual,
        LabelClass::Subtitle,
        LabelClass::Actor,
        LabelClass::Output,
        LabelClass::Other,
    ];
    pub const INPUTS: [LabelClass; 3] = [LabelClass::Visual, LabelClass::Subtitle, LabelClass::Actor];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelClass::Visual => "Visual",
            LabelClass::Subtitle => "Subtitle",
            LabelClass::Actor => "Actor",
            LabelClass::Output => "Output",
            LabelClass::Other => "Other",
        }
    }
}

/// A labeled half-open key range. Input modalities carry the shot id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: LabelClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictQuery {
    pub shot: usize,
    pub query: usize,
}

/// Key spans plus the query position of each shot's verdict token. Keys not
/// covered by any span count as `Other`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SpanMap {
    pub spans: Vec<Span>,
    #[serde(default)]
    pub verdict_queries: Vec<VerdictQuery>,
}

impl SpanMap {
    pub fn validate(&self, dims: &AttentionDims) -> Result<(), AttentionError> {
        let mut sorted = self.spans.clone();
        sorted.sort_by_key(|s| (s.start, s.end));
        for s in &sorted {
            if s.start >= s.end || s.end > dims.keys {
                return Err(AttentionError::InvalidSpan(format!(
                    "[{}, {}) with {} keys",
                    s.start, s.end, dims.keys
                )));
            }
            let needs_shot = LabelClass::INPUTS.contains(&s.label);
            if needs_shot != s.shot.is_some() {
                return Err(AttentionError::InvalidSpan(format!(
                    "{:?} span [{}, {}) {} a shot id",
                    s.label,
                    s.start,
                    s.end,
                    if needs_shot { "needs" } else { "must not carry" }
                )));
            }
        }
        for w in sorted.windows(2) {
            if w[1].start < w[0].end {
                return Err(AttentionError::InvalidSpan(format!(
                    "[{}, {}) overlaps [{}, {})",
                    w[0].start, w[0].end, w[1].start, w[1].end
                )));
            }
        }
        for VerdictQuery { shot, query: q } in &self.verdict_queries {
            if *q >= dims.queries {
                return Err(AttentionError::DimensionMismatch(format!(
                    "verdict query {q} of shot {shot} outside {} queries",
                    dims.queries
                )));
            }
        }
        Ok(())
    }

    pub fn verdict_query(&self, shot: usize) -> Option<usize> {
        self.verdict_queries.iter().find(|v| v.shot == shot).map(|v| v.query)
    }

    /// Class of every key.
    pub fn key_classes(&self, keys: usize) -> Vec<LabelClass> {
        let mut out = vec![LabelClass::Other; keys];
        for s in &self.spans {
            for c in &mut out[s.start..s.end.min(keys)] {
                *c = s.label;
            }
        }
        out
    }

    /// Input shots mentioned by the spans, ascending.
    pub fn shots(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.spans.iter().filter_map(|s| s.shot).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    layers: usize,
    heads: usize,
    queries: usize,
    keys: usize,
    spans: Vec<Span>,
    #[serde(default)]
    verdict_queries: Vec<VerdictQuery>,
}

pub fn encode_dump(dump: &AttentionDump, spans: &SpanMap) -> Vec<u8> {
    let d = dump.dims;
    let header = Header {
        layers: d.layers,
        heads: d.heads,
        queries: d.queries,
        keys: d.keys,
        spans: spans.spans.clone(),
        verdict_queries: spans.verdict_queries.clone(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + header.len() + dump.weights.len() * 4);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for w in &dump.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn decode_dump(bytes: &[u8]) -> Result<(AttentionDump, SpanMap), AttentionError> {
    let bad = |m: String| AttentionError::Format(m);
    if bytes.len() < 8 {
        return Err(bad("file shorter than the length prefix".into()));
    }
    let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let hlen = usize::try_from(hlen)
        .ok()
        .filter(|h| *h <= bytes.len() - 8)
        .ok_or_else(|| bad(format!("header length {hlen} exceeds file size")))?;
    let header: Header =
        serde_json::from_slice(&bytes[8..8 + hlen]).map_err(|e| bad(format!("header: {e}")))?;
    let payload = &bytes[8 + hlen..];
    let dims = AttentionDims {
        layers: header.layers,
        heads: header.heads,
        queries: header.queries,
        keys: header.keys,
    };
    let expected = dims
        .layers
        .checked_mul(dims.heads)
        .and_then(|x| x.checked_mul(dims.queries))
        .and_then(|x| x.checked_mul(dims.keys))
        .and_then(|x| x.checked_mul(4))
        .ok_or_else(|| bad("dimensions overflow".into()))?;
    if payload.len() != expected {
        return Err(AttentionError::DimensionMismatch(format!(
            "payload has {} bytes, dims need {expected}",
            payload.len()
        )));
    }
    let weights = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let dump = AttentionDump::new(dims, weights)?;
    let spans = SpanMap {
        spans: header.spans,
        verdict_queries: header.verdict_queries,
    };
    spans.validate(&dump.dims)?;
    Ok((dump, spans))
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<(AttentionDump, SpanMap), AttentionError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| AttentionError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    decode_dump(&bytes)
}

pub fn write_dump(path: impl AsRef<Path>, dump: &AttentionDump, spans: &SpanMap) -> Result<(), AttentionError> {
    let path = path.as_ref();
    std::fs::write(path, encode_dump(dump, spans)).map_err(|e| AttentionError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
