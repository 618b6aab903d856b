//! Domain types shared by every stage, plus the label-resolution ladder that
//! maps free-text model output onto a dataset's closed activity set.

use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DomainError {
    #[error("activity label is empty")]
    EmptyLabel,
    #[error("object name is empty")]
    EmptyObjectName,
    #[error("a pair needs two distinct activities, got {0:?} twice")]
    DegeneratePair(String),
}

/// One activity class, stored in the casing the dataset declares.
///
/// Comparisons against model output are case-insensitive (see
/// [`normalize_label`]), but the canonical text is what gets reported.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ActivityLabel(String);

impl ActivityLabel {
    pub fn new(text: impl Into<String>) -> Result<Self, DomainError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(DomainError::EmptyLabel);
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn eq_ignore_case(&self, other: &str) -> bool {
        self.0.trim().to_lowercase() == other.trim().to_lowercase()
    }

    fn folded(&self) -> String {
        self.0.trim().to_lowercase()
    }
}

impl TryFrom<String> for ActivityLabel {
    type Error = DomainError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<ActivityLabel> for String {
    fn from(value: ActivityLabel) -> Self {
        value.0
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Time-ordered object names for one episode. Never re-sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectSequence(Vec<String>);

impl ObjectSequence {
    pub fn new<I, S>(items: I) -> Result<Self, DomainError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let items: Vec<String> = items.into_iter().map(Into::into).collect();
        if items.iter().any(|s| s.trim().is_empty()) {
            return Err(DomainError::EmptyObjectName);
        }
        Ok(Self(items))
    }

    pub fn items(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Drops each name that repeats its immediate predecessor.
    pub fn collapse_consecutive(&self) -> Self {
        let mut out: Vec<String> = Vec::with_capacity(self.0.len());
        for item in &self.0 {
            if out.last() != Some(item) {
                out.push(item.clone());
            }
        }
        Self(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub gold: ActivityLabel,
    pub objects: ObjectSequence,
}

/// A named set of activities, its object vocabulary and gold-labelled episodes.
///
/// Fields are public so that fixtures can be assembled by hand; use
/// [`crate::validate_dataset`] to check the invariants on such values.
/// [`crate::load_dataset`] only ever returns datasets that pass validation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub activities: Vec<ActivityLabel>,
    pub vocabulary: Vec<String>,
    pub episodes: Vec<Episode>,
}

impl Dataset {
    /// Case-insensitive lookup of a declared activity.
    pub fn activity(&self, name: &str) -> Option<&ActivityLabel> {
        self.activities.iter().find(|a| a.eq_ignore_case(name))
    }

    pub fn episode(&self, id: &str) -> Option<&Episode> {
        self.episodes.iter().find(|e| e.id == id)
    }
}

/// Two activities judged hard to tell apart.
///
/// Identity is unordered and case-insensitive: `(X, Y) == (Y, X)`. The
/// declared order is kept because it is what the description prompt renders.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActivityPair {
    pub first: ActivityLabel,
    pub second: ActivityLabel,
}

impl ActivityPair {
    pub fn new(first: ActivityLabel, second: ActivityLabel) -> Result<Self, DomainError> {
        if first.folded() == second.folded() {
            return Err(DomainError::DegeneratePair(first.0));
        }
        Ok(Self { first, second })
    }

    pub fn contains(&self, label: &ActivityLabel) -> bool {
        self.first.folded() == label.folded() || self.second.folded() == label.folded()
    }

    fn identity(&self) -> (String, String) {
        let (a, b) = (self.first.folded(), self.second.folded());
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }
}

impl PartialEq for ActivityPair {
    fn eq(&self, other: &Self) -> bool {
        self.identity() == other.identity()
    }
}

impl Eq for ActivityPair {}

impl Hash for ActivityPair {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.identity().hash(state);
    }
}

impl fmt::Display for ActivityPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} and {}", self.first, self.second)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub activity: ActivityLabel,
    pub description: String,
    /// Pairs whose description prompt contributed to this entry.
    pub provenance: Vec<ActivityPair>,
}

/// Per-activity discriminative descriptions assembled from the pair prompts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub entries: Vec<KnowledgeEntry>,
}

impl KnowledgeBase {
    pub fn get(&self, activity: &ActivityLabel) -> Option<&KnowledgeEntry> {
        self.entries.iter().find(|e| &e.activity == activity)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Adds a description, joining it to any existing one with a blank line.
    pub fn append(&mut self, activity: &ActivityLabel, description: &str, source: &ActivityPair) {
        let description = description.trim();
        if description.is_empty() {
            return;
        }
        match self.entries.iter_mut().find(|e| &e.activity == activity) {
            Some(entry) => {
                entry.description.push_str("\n\n");
                entry.description.push_str(description);
                if !entry.provenance.iter().any(|p| p.first == source.first && p.second == source.second) {
                    entry.provenance.push(source.clone());
                }
            }
            None => self.entries.push(KnowledgeEntry {
                activity: activity.clone(),
                description: description.to_string(),
                provenance: vec![source.clone()],
            }),
        }
    }

    /// Reorders entries to follow the given activity order; unknown keys go last.
    pub fn sort_by_activity_order(&mut self, order: &[ActivityLabel]) {
        self.entries.sort_by_key(|e| order.iter().position(|a| a == &e.activity).unwrap_or(usize::MAX));
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Activity(ActivityLabel),
    Abstain,
}

impl Answer {
    pub fn label(&self) -> Option<&ActivityLabel> {
        match self {
            Answer::Activity(label) => Some(label),
            Answer::Abstain => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub episode_id: String,
    pub label: Answer,
    pub explanation: String,
    pub raw: String,
}

const TRAILING_PUNCTUATION: &[char] = &['.', ',', ';', ':', '!'];

fn strip_sentence_punctuation(text: &str) -> &str {
    text.trim().trim_end_matches(|c: char| TRAILING_PUNCTUATION.contains(&c) || c.is_whitespace())
}

fn tokens(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| c.is_whitespace() || c == '_')
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

const JACCARD_THRESHOLD: f64 = 0.5;

/// Resolves free text to one of `activities`, or `None` when nothing fits.
///
/// Ladder, first success wins: exact match; case-insensitive match after
/// trimming whitespace and trailing sentence punctuation; unique best
/// token-set Jaccard similarity of at least 0.5. Ties at the top refuse.
pub fn normalize_label<'a>(candidate: &str, activities: &'a [ActivityLabel]) -> Option<&'a ActivityLabel> {
    if let Some(hit) = activities.iter().find(|a| a.as_str() == candidate) {
        return Some(hit);
    }

    let stripped = strip_sentence_punctuation(candidate).to_lowercase();
    if stripped.is_empty() {
        return None;
    }
    if let Some(hit) = activities.iter().find(|a| a.folded() == stripped) {
        return Some(hit);
    }

    let wanted = tokens(&stripped);
    if wanted.is_empty() {
        return None;
    }
    let mut best: Option<(&ActivityLabel, f64)> = None;
    let mut tied = false;
    for activity in activities {
        let sim = jaccard(&wanted, &tokens(activity.as_str()));
        match best {
            Some((_, top)) if sim == top => tied = true,
            Some((_, top)) if sim < top => {}
            _ => {
                best = Some((activity, sim));
                tied = false;
            }
        }
    }
    match best {
        Some((label, sim)) if sim >= JACCARD_THRESHOLD && !tied => Some(label),
        _ => None,
    }
}
