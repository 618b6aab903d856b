//! Unsupervised activity recognition from object-usage sequences.
//!
//! The crate drives a text-completion backend through a two-stage prompting
//! procedure: first it asks the model which activities are hard to tell
//! apart and has it describe each confusable pair in terms of objects, then
//! it classifies every episode with those descriptions in the prompt and an
//! explanation requested alongside the answer. Three baseline prompting
//! strategies (zero-shot, retrieved knowledge, few-shot) share the same
//! plumbing so results can be compared with micro-F1 and confusion matrices.
//!
//! Module map:
//!
//! - [`domain`]: labels, sequences, datasets and label normalization.
//! - [`dataset`]: manifest + newline-delimited episode loading and validation.
//! - [`prompt`]: byte-deterministic prompt rendering for every strategy.
//! - [`llm`]: completion backends (HTTP, scripted mock) and the response cache.
//! - [`pipeline`]: knowledge generation, answer parsing and experiment runs.
//! - [`eval`]: micro-averaged scores, confusion matrices and report files.

pub mod dataset;
pub mod domain;
pub mod eval;
pub mod llm;
pub mod pipeline;
pub mod prompt;

pub use dataset::{load_dataset, validate_dataset, DatasetManifest, RepeatPolicy, ValidationReport};
pub use domain::{
    normalize_label, ActivityLabel, ActivityPair, Answer, Dataset, Episode, KnowledgeBase,
    ObjectSequence, Prediction,
};
pub use eval::{confusion, score, ConfusionMatrix, MetricsReport};
pub use llm::{Backend, CompletionRequest, CompletionResult, LlmError};
pub use pipeline::{run_experiment, ExperimentRecord, StrategyConfig};
pub use prompt::{PromptText, Strategy};
