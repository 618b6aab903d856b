//! Scoring: micro-averaged precision/recall/F1, confusion matrices, reports.
//!
//! Abstentions and failed episodes count as non-predictions: they lower
//! recall, never precision. Every ratio is derived from integer counts, so
//! `micro_f1` is computed as `2·correct / (n_predicted + n_episodes)`, which
//! equals the harmonic mean of precision and recall and collapses to plain
//! accuracy (bit-for-bit) when every episode received a prediction.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{ActivityLabel, Answer, Dataset};
use crate::pipeline::{ExperimentRecord, PredictionRecord, ABSTAIN, FAILED};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("episode {0:?} is not in the dataset")]
    UnknownEpisode(String),
    #[error("episode {0:?} appears more than once")]
    DuplicateEpisode(String),
    #[error("episode {0:?} has no prediction")]
    MissingEpisode(String),
    #[error("episode {episode:?}: predicted label {label:?} is not a dataset activity")]
    UnknownLabel { episode: String, label: String },
    #[error("comparison table needs at least one scored strategy")]
    EmptyComparison,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Predicted(ActivityLabel),
    Abstain,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredEpisode {
    pub episode_id: String,
    pub outcome: Outcome,
}

impl ScoredEpisode {
    /// Reads a predictions-file line; labels resolve case-insensitively.
    pub fn from_record(record: &PredictionRecord, activities: &[ActivityLabel]) -> Result<Self, EvalError> {
        let outcome = match record.predicted.as_str() {
            ABSTAIN => Outcome::Abstain,
            FAILED => Outcome::Failed,
            other => Outcome::Predicted(activities.iter().find(|a| a.eq_ignore_case(other)).cloned().ok_or_else(|| {
                EvalError::UnknownLabel {
                    episode: record.episode_id.clone(),
                    label: other.to_string(),
                }
            })?),
        };
        Ok(Self {
            episode_id: record.episode_id.clone(),
            outcome,
        })
    }
}

impl ExperimentRecord {
    pub fn scored_episodes(&self) -> Vec<ScoredEpisode> {
        let mut out: Vec<ScoredEpisode> = self
            .predictions
            .iter()
            .map(|p| ScoredEpisode {
                episode_id: p.episode_id.clone(),
                outcome: match &p.label {
                    Answer::Activity(l) => Outcome::Predicted(l.clone()),
                    Answer::Abstain => Outcome::Abstain,
                },
            })
            .chain(self.failures.iter().map(|f| ScoredEpisode {
                episode_id: f.episode_id.clone(),
                outcome: Outcome::Failed,
            }))
            .collect();
        out.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    /// In dataset activity order.
    pub per_class: Vec<(ActivityLabel, ClassCounts)>,
    pub n_episodes: u64,
    pub n_predicted: u64,
    pub n_abstained: u64,
    pub n_failed: u64,
    pub n_correct: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    /// Exact `(numerator, denominator)` of micro precision.
    pub fn precision_ratio(&self) -> (u64, u64) {
        (self.n_correct, self.n_predicted)
    }

    pub fn recall_ratio(&self) -> (u64, u64) {
        (self.n_correct, self.n_episodes)
    }

    pub fn f1_ratio(&self) -> (u64, u64) {
        (2 * self.n_correct, self.n_predicted + self.n_episodes)
    }

    pub fn counts_for(&self, label: &ActivityLabel) -> Option<ClassCounts> {
        self.per_class.iter().find(|(l, _)| l == label).map(|(_, c)| *c)
    }
}

/// Checks coverage: every dataset episode exactly once, nothing else.
fn check_coverage<'a>(outcomes: &'a [ScoredEpisode], dataset: &'a Dataset) -> Result<Vec<(&'a ActivityLabel, &'a Outcome)>, EvalError> {
    let mut seen = HashSet::new();
    let mut rows = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let episode = dataset.episode(&o.episode_id).ok_or_else(|| EvalError::UnknownEpisode(o.episode_id.clone()))?;
        if !seen.insert(o.episode_id.as_str()) {
            return Err(EvalError::DuplicateEpisode(o.episode_id.clone()));
        }
        if let Outcome::Predicted(label) = &o.outcome {
            if !dataset.activities.contains(label) {
                return Err(EvalError::UnknownLabel {
                    episode: o.episode_id.clone(),
                    label: label.to_string(),
                });
            }
        }
        rows.push((&episode.gold, &o.outcome));
    }
    if let Some(missing) = dataset.episodes.iter().find(|e| !seen.contains(e.id.as_str())) {
        return Err(EvalError::MissingEpisode(missing.id.clone()));
    }
    Ok(rows)
}

pub fn score(outcomes: &[ScoredEpisode], dataset: &Dataset) -> Result<MetricsReport, EvalError> {
    let rows = check_coverage(outcomes, dataset)?;
    let mut per_class: Vec<(ActivityLabel, ClassCounts)> =
        dataset.activities.iter().map(|a| (a.clone(), ClassCounts::default())).collect();
    let idx = |l: &ActivityLabel| dataset.activities.iter().position(|a| a == l).expect("coverage checked");

    let (mut n_predicted, mut n_abstained, mut n_failed, mut n_correct) = (0, 0, 0, 0);
    for (gold, outcome) in &rows {
        let g = idx(gold);
        match outcome {
            Outcome::Predicted(p) => {
                n_predicted += 1;
                let p = idx(p);
                if p == g {
                    n_correct += 1;
                    per_class[g].1.tp += 1;
                } else {
                    per_class[p].1.fp += 1;
                    per_class[g].1.fn_ += 1;
                }
            }
            Outcome::Abstain => {
                n_abstained += 1;
                per_class[g].1.fn_ += 1;
            }
            Outcome::Failed => {
                n_failed += 1;
                per_class[g].1.fn_ += 1;
            }
        }
    }
    let n_episodes = rows.len() as u64;
    Ok(MetricsReport {
        micro_precision: ratio(n_correct, n_predicted),
        micro_recall: ratio(n_correct, n_episodes),
        micro_f1: ratio(2 * n_correct, n_predicted + n_episodes),
        per_class,
        n_episodes,
        n_predicted,
        n_abstained,
        n_failed,
        n_correct,
    })
}

/// Rows are gold classes; columns are predicted classes then Abstain then Failed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<ActivityLabel>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn abstain_column(&self) -> usize {
        self.classes.len()
    }

    pub fn failed_column(&self) -> usize {
        self.classes.len() + 1
    }

    pub fn get(&self, gold: &ActivityLabel, predicted: &ActivityLabel) -> Option<u64> {
        let g = self.classes.iter().position(|c| c == gold)?;
        let p = self.classes.iter().position(|c| c == predicted)?;
        Some(self.counts[g][p])
    }

    pub fn diagonal_sum(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut header = vec!["gold\\predicted".to_string()];
        header.extend(self.classes.iter().map(ToString::to_string));
        header.push(ABSTAIN.into());
        header.push(FAILED.into());
        w.write_record(&header).expect("in-memory write");
        for (class, row) in self.classes.iter().zip(&self.counts) {
            let mut rec = vec![class.to_string()];
            rec.extend(row.iter().map(ToString::to_string));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }
}

pub fn confusion(outcomes: &[ScoredEpisode], dataset: &Dataset) -> Result<ConfusionMatrix, EvalError> {
    let rows = check_coverage(outcomes, dataset)?;
    let n = dataset.activities.len();
    let mut counts = vec![vec![0u64; n + 2]; n];
    let idx = |l: &ActivityLabel| dataset.activities.iter().position(|a| a == l).expect("coverage checked");
    for (gold, outcome) in rows {
        let col = match outcome {
            Outcome::Predicted(p) => idx(p),
            Outcome::Abstain => n,
            Outcome::Failed => n + 1,
        };
        counts[idx(gold)][col] += 1;
    }
    Ok(ConfusionMatrix {
        classes: dataset.activities.clone(),
        counts,
    })
}

/// `num/den` as a percentage with two decimals, rounded half up.
pub fn format_percent(num: u64, den: u64) -> String {
    if den == 0 {
        return "0.00".into();
    }
    let (num, den) = (num as u128, den as u128);
    let hundredths = (num * 10_000 * 2 + den) / (2 * den);
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportLabel {
    pub dataset: String,
    pub strategy: String,
}

pub fn render_metrics(label: &ReportLabel, m: &MetricsReport) -> String {
    let (pn, pd) = m.precision_ratio();
    let (rn, rd) = m.recall_ratio();
    let (fnum, fden) = m.f1_ratio();
    let mut out = String::new();
    out.push_str(&format!("dataset: {}\n", label.dataset));
    out.push_str(&format!("strategy: {}\n", label.strategy));
    out.push_str(&format!("micro_precision: {}\n", format_percent(pn, pd)));
    out.push_str(&format!("micro_recall: {}\n", format_percent(rn, rd)));
    out.push_str(&format!("micro_f1: {}\n", format_percent(fnum, fden)));
    out.push_str(&format!("n_episodes: {}\n", m.n_episodes));
    out.push_str(&format!("n_predicted: {}\n", m.n_predicted));
    out.push_str(&format!("n_abstained: {}\n", m.n_abstained));
    out.push_str(&format!("n_failed: {}\n", m.n_failed));
    out.push_str(&format!("n_correct: {}\n", m.n_correct));
    for (class, c) in &m.per_class {
        out.push_str(&format!("per_class.{class}: tp={} fp={} fn={}\n", c.tp, c.fp, c.fn_));
    }
    out
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, EvalError> {
    fs::write(&path, text).map_err(|source| EvalError::Io { path: path.clone(), source })?;
    Ok(path)
}

pub const METRICS_FILE: &str = "metrics.txt";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const COMPARISON_FILE: &str = "comparison.txt";

/// Writes `metrics.txt` and `confusion.csv` into `out_dir`.
pub fn emit_report(label: &ReportLabel, metrics: &MetricsReport, matrix: &ConfusionMatrix, out_dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    fs::create_dir_all(out_dir).map_err(|source| EvalError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    Ok(vec![
        write(out_dir.join(METRICS_FILE), &render_metrics(label, metrics))?,
        write(out_dir.join(CONFUSION_FILE), &matrix.to_csv())?,
    ])
}

/// Strategy × dataset table of micro-F1 percentages; absent cells print `-`.
pub fn render_comparison(entries: &[(ReportLabel, MetricsReport)]) -> Result<String, EvalError> {
    if entries.is_empty() {
        return Err(EvalError::EmptyComparison);
    }
    let mut strategies: Vec<&str> = Vec::new();
    let mut datasets: Vec<&str> = Vec::new();
    for (l, _) in entries {
        if !strategies.contains(&l.strategy.as_str()) {
            strategies.push(&l.strategy);
        }
        if !datasets.contains(&l.dataset.as_str()) {
            datasets.push(&l.dataset);
        }
    }
    let cell = |s: &str, d: &str| {
        entries
            .iter()
            .find(|(l, _)| l.strategy == s && l.dataset == d)
            .map(|(_, m)| {
                let (n, den) = m.f1_ratio();
                format_percent(n, den)
            })
            .unwrap_or_else(|| "-".into())
    };

    let first_width = strategies.iter().map(|s| s.len()).max().unwrap_or(0).max("strategy".len());
    let widths: Vec<usize> = datasets.iter().map(|d| d.len().max("100.00".len())).collect();
    let mut out = format!("{:<first_width$}", "strategy");
    for (d, w) in datasets.iter().zip(&widths) {
        out.push_str(&format!(" | {d:>w$}"));
    }
    out = out.trim_end().to_string();
    out.push('\n');
    out.push_str(&"-".repeat(first_width));
    for w in &widths {
        out.push_str(&format!("-+-{}", "-".repeat(*w)));
    }
    out.push('\n');
    for s in &strategies {
        out.push_str(&format!("{s:<first_width$}"));
        for (d, w) in datasets.iter().zip(&widths) {
            out.push_str(&format!(" | {:>w$}", cell(s, d)));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn emit_comparison(entries: &[(ReportLabel, MetricsReport)], out_dir: &Path) -> Result<PathBuf, EvalError> {
    let table = render_comparison(entries)?;
    write(out_dir.join(COMPARISON_FILE), &table)
}
