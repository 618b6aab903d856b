//! Extraction of structure from free-text completions: confusable pairs,
//! per-activity description blocks, and answers with explanations.
//!
//! All scanning lowercases with ASCII rules only, so byte offsets in the
//! lowered text line up with the original.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::domain::{normalize_label, ActivityLabel, ActivityPair, Answer};

static ANSWER_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*answer(?:\s+and\s+explanation)?\b\s*:?\s*(.*)$").unwrap());
static EXPLANATION_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^\s*explanation\b\s*:?\s*(.*)$").unwrap());
static INLINE_EXPLANATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bexplanation\s*:").unwrap());

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairList {
    pub pairs: Vec<ActivityPair>,
    /// One entry per non-blank line that did not yield a pair.
    pub warnings: Vec<String>,
}

fn strip_list_marker(line: &str) -> &str {
    line.trim_start_matches(|c: char| c.is_ascii_digit() || matches!(c, '.' | ')' | '-' | '*') || c.is_whitespace())
}

fn resolve_pair(left: &str, right: &str, activities: &[ActivityLabel]) -> Result<ActivityPair, String> {
    let first = normalize_label(left, activities).ok_or_else(|| format!("{:?} is not a known activity", left.trim()))?;
    let second = normalize_label(right, activities)
        .or_else(|| right.split_once(':').and_then(|(head, _)| normalize_label(head, activities)))
        .ok_or_else(|| format!("{:?} is not a known activity", right.trim()))?;
    ActivityPair::new(first.clone(), second.clone()).map_err(|e| e.to_string())
}

/// Reads one pair per line in the form `"<activity> and <activity>"`,
/// ignoring leading list markers. Lines that do not resolve to two distinct
/// known activities are skipped with a warning.
pub fn parse_pair_list(text: &str, activities: &[ActivityLabel]) -> PairList {
    let mut out = PairList::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = strip_list_marker(raw).trim();
        if line.is_empty() {
            continue;
        }
        let lowered = line.to_ascii_lowercase();
        let mut last_err = "no \" and \" separator".to_string();
        let mut found = None;
        for (pos, _) in lowered.match_indices(" and ") {
            match resolve_pair(&line[..pos], &line[pos + 5..], activities) {
                Ok(pair) => {
                    found = Some(pair);
                    break;
                }
                Err(e) => last_err = e,
            }
        }
        match found {
            Some(pair) => out.pairs.push(pair),
            None => out.warnings.push(format!("line {}: {:?}: {last_err}", idx + 1, raw.trim())),
        }
    }
    out
}

fn name_variants(label: &ActivityLabel) -> Vec<String> {
    let lower = label.as_str().trim().to_ascii_lowercase();
    let spaced = lower.replace('_', " ");
    if spaced != lower {
        vec![lower, spaced]
    } else {
        vec![lower]
    }
}

/// Activities ordered longest name first, so "Coffee time" wins over "time".
fn by_length_desc(activities: &[ActivityLabel]) -> Vec<&ActivityLabel> {
    let mut sorted: Vec<&ActivityLabel> = activities.iter().collect();
    sorted.sort_by_key(|a| std::cmp::Reverse(a.as_str().len()));
    sorted
}

/// If `line` opens a description block (`"<activity>:"`, optionally behind a
/// list marker or markdown emphasis), returns the activity and the text
/// after the colon.
fn block_start<'a, 'l>(line: &'l str, activities: &[&'a ActivityLabel]) -> Option<(&'a ActivityLabel, &'l str)> {
    let body = line.trim_start_matches(|c: char| c.is_whitespace() || c.is_ascii_digit() || matches!(c, '.' | ')' | '-' | '*' | '#'));
    // A bare list number like "1." is stripped above; guard against eating a name's digits.
    let body = if body.is_empty() { line.trim_start() } else { body };
    let lowered = body.to_ascii_lowercase();
    for activity in activities {
        for variant in name_variants(activity) {
            if let Some(after) = lowered.strip_prefix(variant.as_str()) {
                let after_trim = after.trim_start_matches(|c: char| c == '*' || c.is_whitespace());
                if let Some(rest) = after_trim.strip_prefix(':') {
                    let offset = body.len() - rest.len();
                    return Some((activity, &body[offset..]));
                }
            }
        }
    }
    None
}

/// Splits a pair-description completion into per-activity blocks.
///
/// A block opens on a line that starts with a known activity name followed
/// by `:` and runs until the next such line. Only blocks for the pair's two
/// members are returned; blocks for other activities still close the
/// preceding block. Returned in order of appearance; the same activity may
/// appear more than once.
pub fn parse_descriptions(text: &str, pair: &ActivityPair, activities: &[ActivityLabel]) -> Vec<(ActivityLabel, String)> {
    let sorted = by_length_desc(activities);
    let mut blocks: Vec<(Option<&ActivityLabel>, Vec<&str>)> = Vec::new();
    for line in text.lines() {
        match block_start(line, &sorted) {
            Some((activity, rest)) => {
                let keep = pair.contains(activity).then_some(activity);
                blocks.push((keep, vec![rest]));
            }
            None => {
                if let Some((_, body)) = blocks.last_mut() {
                    body.push(line);
                }
            }
        }
    }
    blocks
        .into_iter()
        .filter_map(|(activity, body)| {
            let activity = activity?;
            let text = body.join("\n").trim().to_string();
            (!text.is_empty()).then(|| (activity.clone(), text))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedAnswer {
    pub answer: Answer,
    pub explanation: String,
}

fn split_inline_explanation(text: &str) -> (&str, Option<&str>) {
    match INLINE_EXPLANATION.find(text) {
        Some(m) => (&text[..m.start()], Some(text[m.end()..].trim())),
        None => (text, None),
    }
}

/// Finds exactly one distinct activity mentioned anywhere in `text`.
fn unique_mention<'a>(text: &str, activities: &'a [ActivityLabel]) -> Option<&'a ActivityLabel> {
    let mut haystack = text.to_ascii_lowercase();
    let mut found: Vec<&ActivityLabel> = Vec::new();
    for activity in by_length_desc(activities) {
        for variant in name_variants(activity) {
            let mut from = 0;
            while let Some(rel) = haystack[from..].find(variant.as_str()) {
                let start = from + rel;
                let end = start + variant.len();
                let before_ok = haystack[..start].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
                let after_ok = haystack[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
                if before_ok && after_ok {
                    if !found.contains(&activity) {
                        found.push(activity);
                    }
                    haystack.replace_range(start..end, &" ".repeat(end - start));
                }
                from = end;
            }
        }
    }
    match found.as_slice() {
        [only] => Some(*only),
        _ => None,
    }
}

/// Resolves a classification completion to an activity (or abstains) and
/// extracts the explanation.
///
/// Ladder: the first `Answer:` line; otherwise the first non-blank line;
/// otherwise a scan of the whole text that succeeds only if exactly one
/// activity is mentioned.
pub fn parse_answer(text: &str, activities: &[ActivityLabel]) -> ParsedAnswer {
    let lines: Vec<&str> = text.lines().collect();
    let answer_idx = lines.iter().position(|l| ANSWER_LINE.is_match(l));

    let mut inline_explanation = None;
    let mut label = None;
    let candidate = match answer_idx {
        Some(i) => {
            let rest = ANSWER_LINE.captures(lines[i]).and_then(|c| c.get(1)).map_or("", |m| m.as_str());
            let (head, inline) = split_inline_explanation(rest);
            inline_explanation = inline;
            if head.trim().is_empty() {
                lines[i + 1..]
                    .iter()
                    .find(|l| !l.trim().is_empty() && !EXPLANATION_LINE.is_match(l))
                    .copied()
            } else {
                Some(head)
            }
        }
        None => lines.iter().find(|l| !l.trim().is_empty()).map(|l| {
            let (head, inline) = split_inline_explanation(l);
            inline_explanation = inline;
            head
        }),
    };
    if let Some(c) = candidate {
        label = normalize_label(c, activities);
    }
    if label.is_none() {
        label = unique_mention(text, activities);
    }

    let explanation = lines
        .iter()
        .enumerate()
        .find(|(i, l)| Some(*i) != answer_idx && EXPLANATION_LINE.is_match(l))
        .map(|(i, l)| {
            let first = EXPLANATION_LINE.captures(l).and_then(|c| c.get(1)).map_or("", |m| m.as_str());
            std::iter::once(first)
                .chain(lines[i + 1..].iter().copied())
                .collect::<Vec<_>>()
                .join("\n")
                .trim()
                .to_string()
        })
        .or_else(|| inline_explanation.map(str::to_string))
        .unwrap_or_default();

    ParsedAnswer {
        answer: label.cloned().map_or(Answer::Abstain, Answer::Activity),
        explanation,
    }
}
