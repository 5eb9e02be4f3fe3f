use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::parse::{parse_concise, VerdictDraft};
use super::ParseFailure;
use crate::backend::{TokenEvent, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    #[default]
    Ok,
    FallbackFloor,
    Defaulted,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfidenceError {
    #[error("neither a yes nor a no variant is among the alternatives")]
    VerdictTokenMissing,
    #[error("p_yes and p_no are both zero")]
    DegenerateProbs,
    #[error("probabilities must be finite and non-negative (p_yes={p_yes}, p_no={p_no})")]
    InvalidProbs { p_yes: f64, p_no: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YesNoProbs {
    pub p_yes: f64,
    pub p_no: f64,
    pub quality: Quality,
}

fn is_variant(token: &str, word: &str) -> bool {
    token.trim().eq_ignore_ascii_case(word)
}

/// Probability mass of Yes and No surface variants among the alternatives
/// of a verdict position. A side with no variant present gets the floor
/// `exp(min_logprob - 1)` and the result is flagged.
pub fn yes_no_probs(event: &TokenEvent) -> Result<YesNoProbs, ConfidenceError> {
    let sum = |word: &str| {
        event
            .alternatives
            .iter()
            .filter(|a| is_variant(&a.token, word))
            .map(|a| a.logprob.exp())
            .fold(None, |acc: Option<f64>, p| Some(acc.unwrap_or(0.0) + p))
    };
    let (yes, no) = (sum("yes"), sum("no"));
    let floor = || {
        let min = event
            .alternatives
            .iter()
            .map(|a| a.logprob)
            .fold(event.logprob, f64::min);
        (min - 1.0).exp()
    };
    match (yes, no) {
        (Some(p_yes), Some(p_no)) => Ok(YesNoProbs { p_yes, p_no, quality: Quality::Ok }),
        (Some(p_yes), None) => Ok(YesNoProbs { p_yes, p_no: floor(), quality: Quality::FallbackFloor }),
        (None, Some(p_no)) => Ok(YesNoProbs { p_yes: floor(), p_no, quality: Quality::FallbackFloor }),
        (None, None) => Err(ConfidenceError::VerdictTokenMissing),
    }
}

pub fn confidence_from_probs(p_yes: f64, p_no: f64) -> Result<f64, ConfidenceError> {
    if !(p_yes.is_finite() && p_no.is_finite() && p_yes >= 0.0 && p_no >= 0.0) {
        return Err(ConfidenceError::InvalidProbs { p_yes, p_no });
    }
    if p_yes == 0.0 && p_no == 0.0 {
        return Err(ConfidenceError::DegenerateProbs);
    }
    Ok(p_yes / (p_yes + p_no))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotVerdict {
    pub shot_id: usize,
    pub decision: bool,
    pub p_yes: f64,
    pub p_no: f64,
    pub confidence: f64,
    pub quality: Quality,
}

impl ShotVerdict {
    /// The verdict used for a shot with no parsed line: no, confidence 0.
    pub fn defaulted(shot_id: usize) -> Self {
        ShotVerdict {
            shot_id,
            decision: false,
            p_yes: 0.0,
            p_no: 1.0,
            confidence: 0.0,
            quality: Quality::Defaulted,
        }
    }

    /// A verdict whose probabilities are the 0/1 indicator of the decision.
    pub fn hard(shot_id: usize, decision: bool, quality: Quality) -> Self {
        let p = if decision { 1.0 } else { 0.0 };
        ShotVerdict {
            shot_id,
            decision,
            p_yes: p,
            p_no: 1.0 - p,
            confidence: p,
            quality,
        }
    }

    /// A verdict from a Yes-share over repeated runs.
    pub fn from_share(shot_id: usize, share: f64) -> Self {
        ShotVerdict {
            shot_id,
            decision: share >= 0.5,
            p_yes: share,
            p_no: 1.0 - share,
            confidence: share,
            quality: Quality::Ok,
        }
    }
}

/// Scores a parsed draft from the logprobs at its verdict token. Drafts
/// whose verdict position carries no usable Yes/No mass keep their decision
/// with a hard 0/1 confidence and are flagged as defaulted.
pub fn verdict_from_draft(draft: &VerdictDraft, tr: &Transcript) -> ShotVerdict {
    let probs = draft
        .token_index
        .and_then(|i| tr.tokens.get(i))
        .ok_or(ConfidenceError::VerdictTokenMissing)
        .and_then(yes_no_probs);
    match probs {
        Ok(YesNoProbs { p_yes, p_no, quality }) => match confidence_from_probs(p_yes, p_no) {
            Ok(confidence) => ShotVerdict {
                shot_id: draft.shot_id,
                decision: draft.decision,
                p_yes,
                p_no,
                confidence,
                quality,
            },
            Err(_) => ShotVerdict::hard(draft.shot_id, draft.decision, Quality::Defaulted),
        },
        Err(_) => ShotVerdict::hard(draft.shot_id, draft.decision, Quality::Defaulted),
    }
}

/// Yes-share per expected shot over repeated Concise runs. Shots never
/// emitted get 0.
pub fn repeated_sampling_confidence(
    transcripts: &[Transcript],
    expected_ids: &[usize],
) -> (BTreeMap<usize, f64>, Vec<ParseFailure>) {
    let mut counts: BTreeMap<usize, usize> = expected_ids.iter().map(|i| (*i, 0)).collect();
    let mut failures = Vec::new();
    for tr in transcripts {
        let parse = parse_concise(tr, expected_ids);
        for id in parse.boundaries() {
            *counts.get_mut(&id).expect("parser only returns expected ids") += 1;
        }
        failures.extend(parse.failures);
    }
    let m = transcripts.len().max(1) as f64;
    let shares = counts
        .into_iter()
        .map(|(id, c)| (id, c as f64 / m))
        .collect();
    (shares, failures)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Alternative;
    use proptest::prelude::*;

    fn event(alts: &[(&str, f64)]) -> TokenEvent {
        let alts: Vec<Alternative> = alts
            .iter()
            .map(|(t, l)| Alternative { token: t.to_string(), logprob: *l })
            .collect();
        TokenEvent::new(alts[0].token.clone(), alts[0].logprob, alts)
    }

    #[test]
    fn ninety_ten() {
        let p = yes_no_probs(&event(&[("Yes", 0.9f64.ln()), ("No", 0.1f64.ln())])).unwrap();
        assert!((p.p_yes - 0.9).abs() < 1e-9);
        assert!((p.p_no - 0.1).abs() < 1e-9);
        assert_eq!(p.quality, Quality::Ok);
    }

    #[test]
    fn symmetric_pair_gives_one_half() {
        let l = 0.3f64.ln();
        let p = yes_no_probs(&event(&[("Yes", l), ("No", l)])).unwrap();
        assert_eq!(p.p_yes, p.p_no);
        assert_eq!(confidence_from_probs(p.p_yes, p.p_no).unwrap(), 0.5);
    }

    #[test]
    fn variants_are_summed() {
        let p = yes_no_probs(&event(&[("Yes", -0.1), ("No", -2.5), (" Yes", -3.0)])).unwrap();
        assert_eq!(p.p_yes, (-0.1f64).exp() + (-3.0f64).exp());
        assert_eq!(p.p_no, (-2.5f64).exp());
        let p = yes_no_probs(&event(&[(" yes", -0.2), ("NO ", -1.0), ("maybe", -2.0)])).unwrap();
        assert_eq!(p.quality, Quality::Ok);
    }

    #[test]
    fn fallback_floor_and_missing() {
        let p = yes_no_probs(&event(&[(" Yes", -0.05), (" Maybe", -4.0)])).unwrap();
        assert_eq!(p.quality, Quality::FallbackFloor);
        assert_eq!(p.p_no, (-5.0f64).exp());
        assert!(confidence_from_probs(p.p_yes, p.p_no).unwrap() > 0.99);
        assert_eq!(
            yes_no_probs(&event(&[("Maybe", -0.1)])),
            Err(ConfidenceError::VerdictTokenMissing)
        );
    }

    #[test]
    fn confidence_examples() {
        assert_eq!(confidence_from_probs(0.3, 0.3).unwrap(), 0.5);
        assert!((confidence_from_probs(0.09, 0.01).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(confidence_from_probs(0.0, 0.0), Err(ConfidenceError::DegenerateProbs));
        assert!(confidence_from_probs(-0.1, 0.5).is_err());
        assert!(confidence_from_probs(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn draft_without_token_is_hard_and_flagged() {
        let tr = Transcript { text: "Shot 1: Yes".into(), tokens: vec![] };
        let v = verdict_from_draft(&VerdictDraft { shot_id: 1, decision: true, token_index: None }, &tr);
        assert_eq!((v.confidence, v.quality), (1.0, Quality::Defaulted));
    }

    #[test]
    fn repeated_sampling_shares() {
        let run = |text: &str| Transcript { text: text.into(), tokens: vec![] };
        let runs = vec![
            run("Shot 7: Yes"),
            run("Shot 7: Yes\nShot 8: Yes"),
            run("Shot 7: Yes\nShot 8: Yes"),
            run(""),
            run("Shot 8: Yes"),
        ];
        let ids: Vec<usize> = (5..15).collect();
        let (shares, failures) = repeated_sampling_confidence(&runs, &ids);
        assert!(failures.is_empty());
        assert_eq!(shares[&7], 0.6);
        assert_eq!(shares[&8], 0.6);
        assert_eq!(shares[&5], 0.0);
        let all = vec![run("Shot 9: Yes"); 5];
        assert_eq!(repeated_sampling_confidence(&all, &ids).0[&9], 1.0);
    }

    proptest! {
        #[test]
        fn scale_invariance(a in 1e-6f64..1.0, b in 1e-6f64..1.0, c in 1e-3f64..1e3) {
            let base = confidence_from_probs(a, b).unwrap();
            let scaled = confidence_from_probs(c * a, c * b).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-12);
        }

        #[test]
        fn monotone_in_p_yes(a in 0.0f64..1.0, d in 1e-6f64..1.0, b in 1e-6f64..1.0) {
            prop_assert!(confidence_from_probs(a + d, b).unwrap() > confidence_from_probs(a, b).unwrap());
        }
    }
}
