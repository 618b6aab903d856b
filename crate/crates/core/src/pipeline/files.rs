//! On-disk forms of knowledge artifacts and predictions.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentRecord, KnowledgeArtifact};
use crate::domain::Answer;

pub const ABSTAIN: &str = "ABSTAIN";
pub const FAILED: &str = "FAILED";

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FileError + '_ {
    move |source| FileError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One line of a predictions file. `predicted` is an activity label,
/// `"ABSTAIN"` or `"FAILED"`; for failures `explanation` carries the error.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub episode_id: String,
    pub predicted: String,
    pub explanation: String,
    pub raw: String,
}

impl ExperimentRecord {
    /// Predictions and failures merged into file records, sorted by episode id.
    pub fn prediction_records(&self) -> Vec<PredictionRecord> {
        let mut out: Vec<PredictionRecord> = self
            .predictions
            .iter()
            .map(|p| PredictionRecord {
                episode_id: p.episode_id.clone(),
                predicted: match &p.label {
                    Answer::Activity(label) => label.to_string(),
                    Answer::Abstain => ABSTAIN.to_string(),
                },
                explanation: p.explanation.clone(),
                raw: p.raw.clone(),
            })
            .chain(self.failures.iter().map(|f| PredictionRecord {
                episode_id: f.episode_id.clone(),
                predicted: FAILED.to_string(),
                explanation: f.error.clone(),
                raw: String::new(),
            }))
            .collect();
        out.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
        out
    }
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<(), FileError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("prediction record serializes");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, FileError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| FileError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_knowledge(path: &Path, artifact: &KnowledgeArtifact) -> Result<(), FileError> {
    let mut text = serde_json::to_string_pretty(artifact).expect("knowledge artifact serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_knowledge(path: &Path) -> Result<KnowledgeArtifact, FileError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| FileError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}
