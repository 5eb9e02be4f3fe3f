//! Line-oriented parsers for the verdict, chapter and rationale grammars.
//!
//! Every non-blank input line ends up in exactly one bucket: accepted,
//! ignored (it belongs to a sibling grammar), or covered by a
//! [`ParseFailure`]. [`LineStats`] records the tallies so callers can audit
//! that nothing was dropped silently.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{FailureReason, ParseFailure};
use crate::backend::Transcript;
use crate::model::Chapter;
use crate::prompting::format_hms;

static VERDICT_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:shot_id\s*:|shot)\s*(\d+)\s*:\s*(.*?)\s*$").unwrap()
});
static CHAPTER_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(\d{1,3}):(\d{1,2})(?::(\d{1,2}))?\s+-\s+(.*?)\s*$").unwrap()
});
static RATIONALE_OPEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*<rationale\b([^>]*)>(.*)$").unwrap());
static RATIONALE_SHOT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^\s*shot\s*=\s*"(\d+)"\s*$"#).unwrap());

const RATIONALE_CLOSE: &str = "</rationale>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LineStats {
    pub nonblank: usize,
    pub accepted: usize,
    pub ignored: usize,
}

impl LineStats {
    /// True when the accepted, ignored and failure-covered lines add up to
    /// the non-blank input lines.
    pub fn accounts_for(&self, failures: &[ParseFailure]) -> bool {
        let covered: usize = failures.iter().map(ParseFailure::lines_covered).sum();
        self.accepted + self.ignored + covered == self.nonblank
    }
}

/// A parsed verdict line. `token_index` points at the token holding the
/// Yes/No surface form, when the transcript carries tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerdictDraft {
    pub shot_id: usize,
    pub decision: bool,
    pub token_index: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct VerdictParse {
    pub drafts: Vec<VerdictDraft>,
    pub failures: Vec<ParseFailure>,
    pub stats: LineStats,
}

impl VerdictParse {
    pub fn in_window(mut self, window: &str) -> Self {
        tag(&mut self.failures, window);
        self
    }

    /// Ids of drafts with a Yes decision.
    pub fn boundaries(&self) -> BTreeSet<usize> {
        self.drafts
            .iter()
            .filter(|d| d.decision)
            .map(|d| d.shot_id)
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ChapterParse {
    pub chapters: Vec<Chapter>,
    pub failures: Vec<ParseFailure>,
    pub stats: LineStats,
}

impl ChapterParse {
    pub fn in_window(mut self, window: &str) -> Self {
        tag(&mut self.failures, window);
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct RationaleParse {
    pub rationales: Vec<(usize, String)>,
    pub failures: Vec<ParseFailure>,
    pub stats: LineStats,
}

impl RationaleParse {
    pub fn in_window(mut self, window: &str) -> Self {
        tag(&mut self.failures, window);
        self
    }
}

fn tag(failures: &mut [ParseFailure], window: &str) {
    for f in failures {
        f.window = window.to_string();
    }
}

fn failure(reason: FailureReason, shot_id: Option<usize>, line: &str) -> ParseFailure {
    ParseFailure {
        window: String::new(),
        shot_id,
        line: line.to_string(),
        reason,
    }
}

/// Lines with the byte offset of their first character. A trailing `\r` is
/// dropped.
fn lines_with_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut at = 0;
    text.split('\n').map(move |line| {
        let start = at;
        at += line.len() + 1;
        (start, line.strip_suffix('\r').unwrap_or(line))
    })
}

enum Verdict {
    Yes,
    No,
}

fn verdict_word(word: &str) -> Option<Verdict> {
    let word = word.strip_suffix('.').unwrap_or(word);
    if word.eq_ignore_ascii_case("yes") {
        Some(Verdict::Yes)
    } else if word.eq_ignore_ascii_case("no") {
        Some(Verdict::No)
    } else {
        None
    }
}

enum LineKind {
    Verdict { shot_id: usize, yes: bool, offset: usize },
    /// Matched the `Shot <id>:` prefix but not a Yes/No verdict.
    BadVerdict(Option<usize>),
    Other,
}

fn classify(line: &str, line_offset: usize) -> LineKind {
    let Some(caps) = VERDICT_LINE.captures(line) else {
        return LineKind::Other;
    };
    let id = caps[1].parse::<usize>().ok();
    let word = caps.get(2).unwrap();
    match (id, verdict_word(word.as_str())) {
        (Some(shot_id), Some(v)) => LineKind::Verdict {
            shot_id,
            yes: matches!(v, Verdict::Yes),
            offset: line_offset + word.start(),
        },
        (id, _) => LineKind::BadVerdict(id),
    }
}

/// Tracks `<rationale ...>` ... `</rationale>` spans so the verdict parsers
/// can hand those lines to the rationale grammar.
#[derive(Default)]
struct RationaleSkipper {
    inside: bool,
}

impl RationaleSkipper {
    fn skip(&mut self, line: &str) -> bool {
        if self.inside {
            if line.contains(RATIONALE_CLOSE) {
                self.inside = false;
            }
            return true;
        }
        if line.trim_start().starts_with("<rationale") {
            self.inside = !line.contains(RATIONALE_CLOSE);
            return true;
        }
        false
    }
}

fn parse_verdict_lines(tr: &Transcript, expected_ids: &[usize], yes_only: bool) -> VerdictParse {
    let expected: BTreeSet<usize> = expected_ids.iter().copied().collect();
    let mut out = VerdictParse::default();
    let mut seen = BTreeSet::new();
    let mut skipper = RationaleSkipper::default();
    for (line_offset, line) in lines_with_offsets(&tr.text) {
        if line.trim().is_empty() {
            continue;
        }
        out.stats.nonblank += 1;
        if skipper.skip(line) {
            out.stats.ignored += 1;
            continue;
        }
        match classify(line, line_offset) {
            LineKind::Verdict { shot_id, yes, offset } => {
                if !expected.contains(&shot_id) {
                    out.failures.push(failure(FailureReason::UnexpectedId, Some(shot_id), line));
                } else if !seen.insert(shot_id) {
                    out.failures.push(failure(FailureReason::Duplicate, Some(shot_id), line));
                } else {
                    out.stats.accepted += 1;
                    if yes || !yes_only {
                        out.drafts.push(VerdictDraft {
                            shot_id,
                            decision: yes,
                            token_index: tr.token_at(offset),
                        });
                    }
                }
            }
            LineKind::BadVerdict(id) => {
                out.failures.push(failure(FailureReason::Malformed, id, line));
            }
            LineKind::Other => out.failures.push(failure(FailureReason::Malformed, None, line)),
        }
    }
    out.drafts.sort_by_key(|d| d.shot_id);
    if !yes_only {
        for id in expected_ids {
            if !seen.contains(id) {
                out.failures.push(failure(FailureReason::Missing, Some(*id), ""));
            }
        }
    }
    out
}

/// Parses one `Shot <id>: Yes|No` line per expected shot (`shot_id:<id>:` is
/// accepted as well). The first valid line for an id wins; expected ids
/// without a valid line are reported as missing.
pub fn parse_comprehensive(tr: &Transcript, expected_ids: &[usize]) -> VerdictParse {
    parse_verdict_lines(tr, expected_ids, false)
}

/// Parses Yes-only output. Shots not mentioned are negatives, so nothing is
/// ever missing. An explicit `No` line is tolerated and yields no draft.
pub fn parse_concise(tr: &Transcript, expected_ids: &[usize]) -> VerdictParse {
    parse_verdict_lines(tr, expected_ids, true)
}

/// Parses `hh:mm:ss - Title` lines (also `m:ss - Title`; digit widths are
/// lenient). Starts must strictly increase; a line that does not advance is
/// dropped as non-monotone.
pub fn parse_chapters(text: &str) -> ChapterParse {
    let mut out = ChapterParse::default();
    for (_, line) in lines_with_offsets(text) {
        if line.trim().is_empty() {
            continue;
        }
        out.stats.nonblank += 1;
        let Some(chapter) = chapter_line(line) else {
            out.failures.push(failure(FailureReason::Malformed, None, line));
            continue;
        };
        if out
            .chapters
            .last()
            .is_some_and(|prev| chapter.start_s <= prev.start_s)
        {
            out.failures.push(failure(FailureReason::NonMonotone, None, line));
            continue;
        }
        out.stats.accepted += 1;
        out.chapters.push(chapter);
    }
    out
}

fn chapter_line(line: &str) -> Option<Chapter> {
    let caps = CHAPTER_LINE.captures(line)?;
    let a: u64 = caps[1].parse().ok()?;
    let b: u64 = caps[2].parse().ok()?;
    let (h, m, s) = match caps.get(3) {
        Some(s) => (a, b, s.as_str().parse::<u64>().ok()?),
        None => (0, a, b),
    };
    if (caps.get(3).is_some() && m >= 60) || s >= 60 {
        return None;
    }
    let title = caps[4].trim();
    if title.is_empty() {
        return None;
    }
    Some(Chapter {
        start_s: (h * 3600 + m * 60 + s) as f64,
        title: title.to_string(),
    })
}

/// Parses `<rationale shot="N">body</rationale>` blocks; the tags may sit on
/// their own lines. Verdict lines are left to the verdict parsers. A block
/// that is unclosed, has an unparsable id or an empty body is one malformed
/// failure covering all its lines; any other stray line is one failure.
pub fn parse_rationales(text: &str) -> RationaleParse {
    let mut out = RationaleParse::default();
    let mut open: Option<(Option<usize>, Vec<&str>, String)> = None;

    fn close(out: &mut RationaleParse, id: Option<usize>, lines: Vec<&str>, body: String) {
        let body = body.trim();
        match id {
            Some(id) if !body.is_empty() => {
                out.stats.accepted += lines.len();
                out.rationales.push((id, body.to_string()));
            }
            _ => out
                .failures
                .push(failure(FailureReason::Malformed, id, &lines.join("\n"))),
        }
    }

    for (_, line) in lines_with_offsets(text) {
        if line.trim().is_empty() {
            if let Some((_, _, body)) = open.as_mut() {
                body.push('\n');
            }
            continue;
        }
        out.stats.nonblank += 1;
        if let Some(caps) = RATIONALE_OPEN.captures(line) {
            if let Some((id, lines, _)) = open.take() {
                // a new block opened before the previous one closed
                out.failures
                    .push(failure(FailureReason::Malformed, id, &lines.join("\n")));
            }
            let id = RATIONALE_SHOT
                .captures(&caps[1])
                .and_then(|c| c[1].parse::<usize>().ok());
            let rest = caps.get(2).unwrap().as_str();
            match rest.find(RATIONALE_CLOSE) {
                Some(end) if rest[end + RATIONALE_CLOSE.len()..].trim().is_empty() => {
                    close(&mut out, id, vec![line], rest[..end].to_string());
                }
                Some(_) => out.failures.push(failure(FailureReason::Malformed, id, line)),
                None => open = Some((id, vec![line], rest.to_string())),
            }
            continue;
        }
        if let Some((id, mut lines, mut body)) = open.take() {
            lines.push(line);
            match line.find(RATIONALE_CLOSE) {
                Some(end) if line[end + RATIONALE_CLOSE.len()..].trim().is_empty() => {
                    body.push('\n');
                    body.push_str(&line[..end]);
                    close(&mut out, id, lines, body);
                }
                Some(_) => out
                    .failures
                    .push(failure(FailureReason::Malformed, id, &lines.join("\n"))),
                None => {
                    body.push('\n');
                    body.push_str(line);
                    open = Some((id, lines, body));
                }
            }
            continue;
        }
        if matches!(classify(line, 0), LineKind::Verdict { .. }) {
            out.stats.ignored += 1;
            continue;
        }
        out.failures.push(failure(FailureReason::Malformed, None, line));
    }
    if let Some((id, lines, _)) = open {
        out.failures
            .push(failure(FailureReason::Malformed, id, &lines.join("\n")));
    }
    out
}

pub fn format_comprehensive(verdicts: &[(usize, bool)]) -> String {
    verdicts
        .iter()
        .map(|(id, yes)| format!("Shot {id}: {}", if *yes { "Yes" } else { "No" }))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn format_concise(boundaries: &[usize]) -> String {
    boundaries
        .iter()
        .map(|id| format!("Shot {id}: Yes"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Chapters as `HH:MM:SS - Title` lines. Starts are rounded to whole seconds.
pub fn format_chapters(chapters: &[Chapter]) -> String {
    chapters
        .iter()
        .map(|c| format!("{} - {}", format_hms(c.start_s), c.title))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn format_rationale(shot_id: usize, text: &str) -> String {
    format!("<rationale shot=\"{shot_id}\">\n{text}\n</rationale>")
}

/// Rationales keyed by shot; the first block for a shot wins.
pub fn rationale_map(parse: &RationaleParse) -> BTreeMap<usize, String> {
    let mut map = BTreeMap::new();
    for (id, text) in &parse.rationales {
        map.entry(*id).or_insert_with(|| text.clone());
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{simple_tokenize, TokenEvent};
    use proptest::prelude::*;

    fn tr(text: &str) -> Transcript {
        Transcript::from_tokens(
            simple_tokenize(text)
                .into_iter()
                .map(|t| TokenEvent::new(t, -0.1, vec![]))
                .collect(),
        )
    }

    fn reasons(f: &[ParseFailure]) -> Vec<FailureReason> {
        f.iter().map(|f| f.reason).collect()
    }

    #[test]
    fn two_clean_lines() {
        let t = tr("Shot 5: Yes\nShot 6: No");
        let p = parse_comprehensive(&t, &[5, 6]);
        assert!(p.failures.is_empty());
        assert_eq!(p.drafts.len(), 2);
        assert_eq!((p.drafts[0].shot_id, p.drafts[0].decision), (5, true));
        assert_eq!((p.drafts[1].shot_id, p.drafts[1].decision), (6, false));
        let yes = &t.tokens[p.drafts[0].token_index.unwrap()];
        let no = &t.tokens[p.drafts[1].token_index.unwrap()];
        assert_eq!(yes.token_text, " Yes");
        assert_eq!(no.token_text, " No");
        assert!(p.stats.accounts_for(&p.failures));
    }

    #[test]
    fn legacy_prefix_is_accepted() {
        let p = parse_comprehensive(&tr("shot_id:3: No\nSHOT 4: yes."), &[3, 4]);
        assert!(p.failures.is_empty());
        assert_eq!(p.boundaries(), BTreeSet::from([4]));
    }

    #[test]
    fn empty_output_reports_missing() {
        let p = parse_comprehensive(&tr(""), &[5]);
        assert!(p.drafts.is_empty());
        assert_eq!(reasons(&p.failures), vec![FailureReason::Missing]);
        assert_eq!(p.failures[0].shot_id, Some(5));
    }

    #[test]
    fn first_valid_duplicate_wins() {
        let p = parse_comprehensive(&tr("Shot 5: Maybe\nShot 5: Yes"), &[5]);
        assert_eq!(p.drafts.len(), 1);
        assert!(p.drafts[0].decision);
        assert_eq!(reasons(&p.failures), vec![FailureReason::Malformed]);

        let p = parse_comprehensive(&tr("Shot 5: No\nShot 5: Yes"), &[5]);
        assert!(!p.drafts[0].decision);
        assert_eq!(reasons(&p.failures), vec![FailureReason::Duplicate]);
    }

    #[test]
    fn unexpected_and_garbage_lines() {
        let p = parse_comprehensive(&tr("Shot 99: Yes\nhello\nShot 5: No"), &[5]);
        assert_eq!(
            reasons(&p.failures),
            vec![FailureReason::UnexpectedId, FailureReason::Malformed]
        );
        assert!(p.stats.accounts_for(&p.failures));
    }

    #[test]
    fn rationale_blocks_are_skipped_by_verdict_parser() {
        let text = "Shot 5: Yes\n<rationale shot=\"5\">\nThe location changes.\n</rationale>\nShot 6: No";
        let p = parse_comprehensive(&tr(text), &[5, 6]);
        assert!(p.failures.is_empty());
        assert_eq!(p.stats.ignored, 3);
        let r = parse_rationales(text);
        assert_eq!(r.rationales, vec![(5, "The location changes.".to_string())]);
        assert!(r.failures.is_empty());
        assert_eq!(r.stats.ignored, 2);
    }

    #[test]
    fn concise_examples() {
        let expected: Vec<usize> = (5..15).collect();
        let p = parse_concise(&tr("Shot 7: Yes"), &expected);
        assert_eq!(p.boundaries(), BTreeSet::from([7]));
        assert!(p.failures.is_empty());

        let p = parse_concise(&tr(""), &expected);
        assert!(p.boundaries().is_empty() && p.failures.is_empty());

        let p = parse_concise(&tr("Shot 99: Yes"), &expected);
        assert!(p.boundaries().is_empty());
        assert_eq!(reasons(&p.failures), vec![FailureReason::UnexpectedId]);

        let p = parse_concise(&tr("Shot 8: No\nShot 9: Yes"), &expected);
        assert_eq!(p.boundaries(), BTreeSet::from([9]));
        assert!(p.failures.is_empty());
    }

    #[test]
    fn chapter_examples() {
        let p = parse_chapters("00:00:00 - Intro\n00:01:30 - Setup");
        assert_eq!(
            p.chapters,
            vec![Chapter { start_s: 0.0, title: "Intro".into() }, Chapter { start_s: 90.0, title: "Setup".into() }]
        );
        let p = parse_chapters("00:02:00 - B\n00:01:00 - A");
        assert_eq!(p.chapters, vec![Chapter { start_s: 120.0, title: "B".into() }]);
        assert_eq!(reasons(&p.failures), vec![FailureReason::NonMonotone]);
        let p = parse_chapters("0:0:5 - X");
        assert_eq!(p.chapters, vec![Chapter { start_s: 5.0, title: "X".into() }]);
        assert_eq!(parse_chapters(&format_chapters(&p.chapters)).chapters, p.chapters);
    }

    #[test]
    fn chapter_field_ranges() {
        assert_eq!(parse_chapters("1:30 - Short form").chapters[0].start_s, 90.0);
        assert!(parse_chapters("00:61:00 - Bad").chapters.is_empty());
        assert!(parse_chapters("00:00:75 - Bad").chapters.is_empty());
        assert!(parse_chapters("00:00:05 -   ").chapters.is_empty());
        assert_eq!(parse_chapters("00:00:05 - a - b").chapters[0].title, "a - b");
    }

    #[test]
    fn rationale_examples() {
        let ok = format_rationale(12, "A location change to the harbour.");
        let r = parse_rationales(&ok);
        assert_eq!(r.rationales, vec![(12, "A location change to the harbour.".to_string())]);

        let r = parse_rationales("Just some prose about the film.");
        assert!(r.rationales.is_empty());
        assert_eq!(reasons(&r.failures), vec![FailureReason::Malformed]);

        let two = format!("{}\n<rationale shot=\"x\">\nbody\n</rationale>", format_rationale(3, "Time skip."));
        let r = parse_rationales(&two);
        assert_eq!(r.rationales.len(), 1);
        assert_eq!(r.failures.len(), 1);
        assert!(r.stats.accounts_for(&r.failures));
    }

    #[test]
    fn rationale_edge_cases() {
        let r = parse_rationales("<rationale shot=\"4\">inline</rationale>");
        assert_eq!(r.rationales, vec![(4, "inline".to_string())]);
        let r = parse_rationales("<rationale shot=\"4\">\nnever closed");
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].lines_covered(), 2);
        let r = parse_rationales("<rationale shot=\"4\">\n</rationale>");
        assert_eq!(reasons(&r.failures), vec![FailureReason::Malformed]);
        let r = parse_rationales("<rationale shot=\"1\">\na\n<rationale shot=\"2\">b</rationale>");
        assert_eq!(r.rationales, vec![(2, "b".to_string())]);
        assert!(r.stats.accounts_for(&r.failures));
    }

    fn verdict_lists() -> impl Strategy<Value = Vec<(usize, bool)>> {
        proptest::collection::btree_map(0usize..100_000, any::<bool>(), 0..30)
            .prop_map(|m| m.into_iter().collect())
    }

    proptest! {
        #[test]
        fn comprehensive_roundtrip(v in verdict_lists()) {
            let ids: Vec<usize> = v.iter().map(|(i, _)| *i).collect();
            let p = parse_comprehensive(&tr(&format_comprehensive(&v)), &ids);
            prop_assert!(p.failures.is_empty());
            let back: Vec<(usize, bool)> = p.drafts.iter().map(|d| (d.shot_id, d.decision)).collect();
            prop_assert_eq!(back, v);
        }

        #[test]
        fn concise_roundtrip(v in verdict_lists()) {
            let ids: Vec<usize> = v.iter().map(|(i, _)| *i).collect();
            let yes: Vec<usize> = v.iter().filter(|(_, y)| *y).map(|(i, _)| *i).collect();
            let p = parse_concise(&tr(&format_concise(&yes)), &ids);
            prop_assert!(p.failures.is_empty());
            prop_assert_eq!(p.boundaries(), yes.into_iter().collect::<BTreeSet<_>>());
        }

        #[test]
        fn parsers_account_for_every_line(s in "(\\PC{0,20}\n?){0,8}") {
            let t = tr(&s);
            let ids: Vec<usize> = (0..12).collect();
            let p = parse_comprehensive(&t, &ids);
            prop_assert!(p.stats.accounts_for(&p.failures));
            let p = parse_concise(&t, &ids);
            prop_assert!(p.stats.accounts_for(&p.failures));
            let c = parse_chapters(&s);
            prop_assert!(c.stats.accounts_for(&c.failures));
            let r = parse_rationales(&s);
            prop_assert!(r.stats.accounts_for(&r.failures));
        }
    }
}
