//! Dataset manifests and the newline-delimited episode format.
//!
//! A manifest is a small TOML file naming the activity set, the episode file
//! and, optionally, an explicit object vocabulary. Episode files hold one JSON
//! object per line:
//!
//! ```text
//! {"episode_id":"opp-s1-e3","activity":"Cleanup","objects":["Plate","Glass","Dishwasher"]}
//! ```
//!
//! Unknown fields are ignored. Blank lines are skipped.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{ActivityLabel, Dataset, Episode, ObjectSequence};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("dataset failed validation:\n{0}")]
    Validation(ValidationReport),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepeatPolicy {
    KeepAll,
    /// Drop object events that repeat the immediately preceding one.
    #[default]
    CollapseConsecutive,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub activities: Vec<String>,
    pub episodes_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vec<String>>,
    #[serde(default)]
    pub repeat_policy: RepeatPolicy,
}

impl DatasetManifest {
    /// Reads a TOML manifest. A relative `episodes_path` is resolved against
    /// the manifest's own directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut manifest: DatasetManifest = toml::from_str(&text).map_err(|e| DatasetError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if manifest.episodes_path.is_relative() {
            if let Some(dir) = path.parent() {
                manifest.episodes_path = dir.join(&manifest.episodes_path);
            }
        }
        Ok(manifest)
    }

    fn check(&self) -> Result<Vec<ActivityLabel>, DatasetError> {
        let fail = |message: String| DatasetError::Manifest {
            path: self.episodes_path.clone(),
            message,
        };
        if self.activities.is_empty() {
            return Err(fail("activities must not be empty".into()));
        }
        let mut seen = HashSet::new();
        let mut labels = Vec::with_capacity(self.activities.len());
        for name in &self.activities {
            let label = ActivityLabel::new(name.clone()).map_err(|e| fail(e.to_string()))?;
            if !seen.insert(name.trim().to_lowercase()) {
                return Err(fail(format!("duplicate activity {name:?}")));
            }
            labels.push(label);
        }
        Ok(labels)
    }
}

#[derive(Debug, Deserialize)]
pub(crate) struct EpisodeRecord {
    pub episode_id: String,
    pub activity: String,
    pub objects: Vec<String>,
}

/// Parses newline-delimited episode records. Used for episode and exemplar files.
pub(crate) fn read_records(path: &Path) -> Result<Vec<(usize, EpisodeRecord)>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: EpisodeRecord = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push((idx + 1, record));
    }
    Ok(out)
}

pub fn load_dataset(manifest: &DatasetManifest) -> Result<Dataset, DatasetError> {
    let activities = manifest.check()?;
    let records = read_records(&manifest.episodes_path)?;
    let parse_err = |line: usize, message: String| DatasetError::Parse {
        path: manifest.episodes_path.clone(),
        line,
        message,
    };

    let mut episodes = Vec::with_capacity(records.len());
    for (line, record) in records {
        if record.episode_id.trim().is_empty() {
            return Err(parse_err(line, "episode_id is empty".into()));
        }
        // Gold labels are matched case-insensitively and stored in declared casing;
        // unknown labels are kept verbatim so validation can name them.
        let gold = match activities.iter().find(|a| a.eq_ignore_case(&record.activity)) {
            Some(label) => label.clone(),
            None => ActivityLabel::new(record.activity).map_err(|e| parse_err(line, e.to_string()))?,
        };
        let objects = ObjectSequence::new(record.objects).map_err(|e| parse_err(line, e.to_string()))?;
        let objects = match manifest.repeat_policy {
            RepeatPolicy::KeepAll => objects,
            RepeatPolicy::CollapseConsecutive => objects.collapse_consecutive(),
        };
        episodes.push(Episode {
            id: record.episode_id,
            gold,
            objects,
        });
    }

    let vocabulary = match &manifest.vocabulary {
        Some(v) => v.clone(),
        None => derive_vocabulary(&episodes),
    };

    let dataset = Dataset {
        name: manifest.name.clone(),
        activities,
        vocabulary,
        episodes,
    };
    let report = validate_dataset(&dataset);
    if report.is_empty() {
        Ok(dataset)
    } else {
        Err(DatasetError::Validation(report))
    }
}

/// Union of episode object names in first-occurrence order (case-insensitive dedup).
pub fn derive_vocabulary(episodes: &[Episode]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut vocab = Vec::new();
    for item in episodes.iter().flat_map(|e| e.objects.items()) {
        if seen.insert(item.to_lowercase()) {
            vocab.push(item.clone());
        }
    }
    vocab
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    TooFewActivities(usize),
    DuplicateActivity(String),
    DuplicateVocabulary(String),
    UnknownGold { episode: String, label: String },
    EmptySequence { episode: String },
    DuplicateId { episode: String },
    ObjectNotInVocabulary { episode: String, object: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewActivities(n) => write!(f, "dataset declares {n} activities, need at least 2"),
            Violation::DuplicateActivity(a) => write!(f, "duplicate activity {a:?}"),
            Violation::DuplicateVocabulary(o) => write!(f, "duplicate vocabulary entry {o:?}"),
            Violation::UnknownGold { episode, label } => {
                write!(f, "episode {episode}: gold label {label:?} is not a declared activity")
            }
            Violation::EmptySequence { episode } => write!(f, "episode {episode}: object sequence is empty"),
            Violation::DuplicateId { episode } => write!(f, "episode {episode}: duplicate episode id"),
            Violation::ObjectNotInVocabulary { episode, object } => {
                write!(f, "episode {episode}: object {object:?} is not in the vocabulary")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate_dataset(dataset: &Dataset) -> ValidationReport {
    let mut violations = Vec::new();

    if dataset.activities.len() < 2 {
        violations.push(Violation::TooFewActivities(dataset.activities.len()));
    }
    let mut seen = HashSet::new();
    for a in &dataset.activities {
        if !seen.insert(a.as_str().trim().to_lowercase()) {
            violations.push(Violation::DuplicateActivity(a.to_string()));
        }
    }

    let mut vocab = HashSet::new();
    for o in &dataset.vocabulary {
        if !vocab.insert(o.to_lowercase()) {
            violations.push(Violation::DuplicateVocabulary(o.clone()));
        }
    }

    let mut ids = HashSet::new();
    for ep in &dataset.episodes {
        if !ids.insert(ep.id.as_str()) {
            violations.push(Violation::DuplicateId { episode: ep.id.clone() });
        }
        if !dataset.activities.contains(&ep.gold) {
            violations.push(Violation::UnknownGold {
                episode: ep.id.clone(),
                label: ep.gold.to_string(),
            });
        }
        if ep.objects.is_empty() {
            violations.push(Violation::EmptySequence { episode: ep.id.clone() });
        }
        let mut reported = HashSet::new();
        for object in ep.objects.items() {
            let folded = object.to_lowercase();
            if !vocab.contains(&folded) && reported.insert(folded) {
                violations.push(Violation::ObjectNotInVocabulary {
                    episode: ep.id.clone(),
                    object: object.clone(),
                });
            }
        }
    }

    ValidationReport { violations }
}
