//! Prompt rendering.
//!
//! Every prompt is a handful of single-line components joined by `\n`, ending
//! with the answer cue `"Answer and Explanation: "` (trailing space, no
//! newline) so the completion continues straight after it. Lists are joined
//! with `", "` in dataset order. Rendering is pure and byte-deterministic;
//! golden files under `tests/golden/` pin the exact output.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{read_records, DatasetError};
use crate::domain::{ActivityLabel, ActivityPair, Dataset, KnowledgeBase, ObjectSequence};

/// Which prompt shape produced a [`PromptText`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptKind {
    PairDiscovery,
    PairDescription,
    Proposed,
    ZeroShot,
    RetrievalKnowledge,
    FewShot,
}

/// Classification strategy: the two-stage method or one of the baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Proposed,
    ZeroShot,
    #[serde(rename = "retrieval")]
    RetrievalKnowledge,
    FewShot,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Proposed, Strategy::ZeroShot, Strategy::RetrievalKnowledge, Strategy::FewShot];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Proposed => "proposed",
            Strategy::ZeroShot => "zero-shot",
            Strategy::RetrievalKnowledge => "retrieval",
            Strategy::FewShot => "few-shot",
        }
    }

    pub fn prompt_kind(self) -> PromptKind {
        match self {
            Strategy::Proposed => PromptKind::Proposed,
            Strategy::ZeroShot => PromptKind::ZeroShot,
            Strategy::RetrievalKnowledge => PromptKind::RetrievalKnowledge,
            Strategy::FewShot => PromptKind::FewShot,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?} (expected proposed, zero-shot, retrieval or few-shot)"))
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("cannot render a prompt without activities and object vocabulary")]
    EmptyContext,
    #[error("pair count must be at least 1")]
    ZeroPairs,
    #[error("activity {0:?} is not in the dataset")]
    UnknownActivity(String),
    #[error("{strategy} prompt: {reason}")]
    KnowledgeMismatch { strategy: Strategy, reason: String },
    #[error("object sequence is empty")]
    EmptySequence,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    text: String,
    kind: PromptKind,
}

impl PromptText {
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn kind(&self) -> PromptKind {
        self.kind
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.text.as_bytes()
    }

    /// Wraps arbitrary text, e.g. for ad-hoc requests in smoke tests.
    pub fn raw(text: impl Into<String>, kind: PromptKind) -> Self {
        Self { text: text.into(), kind }
    }
}

/// A hand-written (objects, label) example for few-shot prompting.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub objects: ObjectSequence,
    pub label: ActivityLabel,
}

impl Exemplar {
    /// Reads an exemplar file (same record shape as an episode file).
    /// Labels are resolved case-insensitively against `activities`.
    pub fn load_file(path: &Path, activities: &[ActivityLabel]) -> Result<Vec<Exemplar>, DatasetError> {
        let mut out = Vec::new();
        for (line, record) in read_records(path)? {
            let parse_err = |message: String| DatasetError::Parse {
                path: path.to_path_buf(),
                line,
                message,
            };
            let label = activities
                .iter()
                .find(|a| a.eq_ignore_case(&record.activity))
                .cloned()
                .ok_or_else(|| parse_err(format!("exemplar label {:?} is not a declared activity", record.activity)))?;
            let objects = ObjectSequence::new(record.objects).map_err(|e| parse_err(e.to_string()))?;
            if objects.is_empty() {
                return Err(parse_err("exemplar has no objects".into()));
            }
            out.push(Exemplar { objects, label });
        }
        Ok(out)
    }
}

/// The knowledge statement a classification prompt carries.
#[derive(Clone, Copy, Debug)]
pub enum Knowledge<'a> {
    None,
    Generated(&'a KnowledgeBase),
    Retrieved(&'a str),
    Exemplars(&'a [Exemplar]),
}

/// Dataset-level context every prompt draws on.
#[derive(Clone, Copy, Debug)]
pub struct PromptContext<'a> {
    pub activities: &'a [ActivityLabel],
    pub vocabulary: &'a [String],
}

impl<'a> From<&'a Dataset> for PromptContext<'a> {
    fn from(ds: &'a Dataset) -> Self {
        Self {
            activities: &ds.activities,
            vocabulary: &ds.vocabulary,
        }
    }
}

const OBJECTS_LINE: &str = "All objects in the dataset: {objects}";
const ACTIVITIES_LINE: &str = "All activities in the dataset: {activities}";
const PAIR_QUESTION: &str = "Question: List {k} pair of activities in [All activities] that is difficult to distinguish";
const DESCRIBE_QUESTION: &str = "Question: Differentiate {first} and {second} activities based on objects.";
const KNOWLEDGE_HEADER: &str = "Name and Description of activities:";
const KNOWLEDGE_ENTRY: &str = "{name}: {description}";
const CLASSIFY_QUESTION: &str =
    "Question: A list of objects a person used that ordered in time: {objects}. Output the name of the activity the person most probably performs";
const EXEMPLAR_ANSWER: &str = "Answer: {label}";
const ANSWER_CUE: &str = "Answer and Explanation: ";

#[cfg(test)]
const TEMPLATES: &[&str] = &[
    OBJECTS_LINE,
    ACTIVITIES_LINE,
    PAIR_QUESTION,
    DESCRIBE_QUESTION,
    KNOWLEDGE_HEADER,
    KNOWLEDGE_ENTRY,
    CLASSIFY_QUESTION,
    EXEMPLAR_ANSWER,
    ANSWER_CUE,
];

/// Single-pass placeholder substitution. Substituted values are never
/// rescanned, so braces inside object names or model text are left alone.
///
/// Panics if the template names a placeholder absent from `vars`; templates
/// are constants in this module and covered by tests.
fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = rest[open..].find('}').map(|c| open + c).expect("unterminated placeholder in template");
        let name = &rest[open + 1..close];
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .unwrap_or_else(|| panic!("template placeholder {{{name}}} has no value"));
        out.push_str(value);
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    out
}

fn join<S: AsRef<str>>(items: &[S]) -> String {
    items.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(", ")
}

fn labels(activities: &[ActivityLabel]) -> String {
    activities.iter().map(ActivityLabel::as_str).collect::<Vec<_>>().join(", ")
}

fn check_context(ctx: &PromptContext<'_>, need_vocabulary: bool) -> Result<(), PromptError> {
    if ctx.activities.is_empty() || (need_vocabulary && ctx.vocabulary.is_empty()) {
        return Err(PromptError::EmptyContext);
    }
    Ok(())
}

fn assemble(components: Vec<String>, kind: PromptKind) -> PromptText {
    PromptText {
        text: components.join("\n"),
        kind,
    }
}

fn scaffold_head(ctx: &PromptContext<'_>) -> Vec<String> {
    vec![
        fill(OBJECTS_LINE, &[("objects", &join(ctx.vocabulary))]),
        fill(ACTIVITIES_LINE, &[("activities", &labels(ctx.activities))]),
    ]
}

/// First stage, first prompt: ask for `k` pairs of hard-to-distinguish activities.
pub fn render_pair_discovery(ctx: PromptContext<'_>, k: usize) -> Result<PromptText, PromptError> {
    check_context(&ctx, true)?;
    if k == 0 {
        return Err(PromptError::ZeroPairs);
    }
    let mut parts = scaffold_head(&ctx);
    parts.push(fill(PAIR_QUESTION, &[("k", &k.to_string())]));
    parts.push(ANSWER_CUE.to_string());
    Ok(assemble(parts, PromptKind::PairDiscovery))
}

/// First stage, second prompt: ask the model to tell one pair apart by objects.
pub fn render_pair_description(ctx: PromptContext<'_>, pair: &ActivityPair) -> Result<PromptText, PromptError> {
    check_context(&ctx, true)?;
    for member in [&pair.first, &pair.second] {
        if !ctx.activities.contains(member) {
            return Err(PromptError::UnknownActivity(member.to_string()));
        }
    }
    let mut parts = scaffold_head(&ctx);
    parts.push(fill(
        DESCRIBE_QUESTION,
        &[("first", pair.first.as_str()), ("second", pair.second.as_str())],
    ));
    parts.push(ANSWER_CUE.to_string());
    Ok(assemble(parts, PromptKind::PairDescription))
}

fn classify_question(objects: &ObjectSequence) -> String {
    fill(CLASSIFY_QUESTION, &[("objects", &join(objects.items()))])
}

fn mismatch(strategy: Strategy, reason: impl Into<String>) -> PromptError {
    PromptError::KnowledgeMismatch {
        strategy,
        reason: reason.into(),
    }
}

/// Second stage (or a baseline): classify one object sequence.
pub fn render_classification(
    strategy: Strategy,
    ctx: PromptContext<'_>,
    knowledge: Knowledge<'_>,
    objects: &ObjectSequence,
) -> Result<PromptText, PromptError> {
    if objects.is_empty() {
        return Err(PromptError::EmptySequence);
    }
    let activities_line = fill(ACTIVITIES_LINE, &[("activities", &labels(ctx.activities))]);
    let mut parts = Vec::new();

    match (strategy, knowledge) {
        (Strategy::Proposed, Knowledge::Generated(kb)) => {
            check_context(&ctx, false)?;
            if kb.is_empty() {
                return Err(mismatch(strategy, "knowledge base is empty"));
            }
            parts.push(activities_line);
            parts.push(KNOWLEDGE_HEADER.to_string());
            for activity in ctx.activities {
                if let Some(entry) = kb.get(activity) {
                    // One line per activity: internal line breaks are flattened.
                    let flat = entry.description.split_whitespace().collect::<Vec<_>>().join(" ");
                    parts.push(fill(KNOWLEDGE_ENTRY, &[("name", activity.as_str()), ("description", &flat)]));
                }
            }
            if kb.entries.iter().any(|e| !ctx.activities.contains(&e.activity)) {
                return Err(mismatch(strategy, "knowledge base names an activity outside the dataset"));
            }
        }
        (Strategy::ZeroShot, Knowledge::None) => {
            check_context(&ctx, true)?;
            parts.extend(scaffold_head(&ctx));
        }
        (Strategy::RetrievalKnowledge, Knowledge::Retrieved(text)) => {
            check_context(&ctx, false)?;
            if text.trim().is_empty() {
                return Err(mismatch(strategy, "retrieval text is empty"));
            }
            parts.push(activities_line);
            parts.push(text.to_string());
        }
        (Strategy::FewShot, Knowledge::Exemplars(exemplars)) => {
            check_context(&ctx, true)?;
            parts.extend(scaffold_head(&ctx));
            for activity in ctx.activities {
                let ex = exemplars
                    .iter()
                    .find(|e| &e.label == activity)
                    .ok_or_else(|| mismatch(strategy, format!("no exemplar for activity {activity:?}")))?;
                parts.push(classify_question(&ex.objects));
                parts.push(fill(EXEMPLAR_ANSWER, &[("label", ex.label.as_str())]));
            }
        }
        (strategy, other) => {
            return Err(mismatch(strategy, format!("unexpected knowledge kind {}", knowledge_kind(&other))));
        }
    }

    parts.push(classify_question(objects));
    parts.push(ANSWER_CUE.to_string());
    Ok(assemble(parts, strategy.prompt_kind()))
}

fn knowledge_kind(k: &Knowledge<'_>) -> &'static str {
    match k {
        Knowledge::None => "none",
        Knowledge::Generated(_) => "generated knowledge base",
        Knowledge::Retrieved(_) => "retrieval text",
        Knowledge::Exemplars(_) => "exemplars",
    }
}
