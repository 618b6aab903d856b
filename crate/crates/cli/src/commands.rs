//! The subcommands. Each takes resolved [`Options`]; the ones that talk to a
//! model also take the backend so callers (and tests) can supply their own.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use har_core::eval::{confusion, emit_comparison, emit_report, score, ReportLabel, ScoredEpisode};
use har_core::llm::{Backend, CachedBackend, HttpBackend, HttpConfig, ResponseCache, ScriptedMock};
use har_core::pipeline::{
    build_knowledge, classify_dataset, read_knowledge, read_predictions, write_knowledge, write_predictions, ExperimentRecord,
    KnowledgeArtifact, PipelineError,
};
use har_core::prompt::Strategy;
use har_core::{load_dataset, ConfusionMatrix, Dataset, DatasetManifest, MetricsReport};

use crate::config::{BackendSpec, Options};
use crate::error::CliError;

pub const CONFIG_FILE: &str = "config.toml";
pub const KNOWLEDGE_FILE: &str = "knowledge.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const RECORD_FILE: &str = "record.json";

/// Where `run` puts run directories unless `--out` says otherwise.
pub const DEFAULT_RUNS_DIR: &str = "runs";

pub fn load(opts: &Options) -> Result<Dataset, CliError> {
    let manifest = DatasetManifest::from_file(opts.dataset_path()?)?;
    Ok(load_dataset(&manifest)?)
}

/// The backend named by `--backend`, without caching.
pub fn open_backend(opts: &Options) -> Result<Arc<dyn Backend>, CliError> {
    Ok(match opts.backend_spec()? {
        BackendSpec::Mock(path) => Arc::new(ScriptedMock::from_replay_file(path)?),
        BackendSpec::Http(url) => Arc::new(HttpBackend::new(HttpConfig::from_env(url))?),
    })
}

/// Wraps `backend` in the response cache unless caching is disabled.
/// The cache lives in `--cache-dir`, `HAR_CACHE_DIR`, or `<out_dir>/cache`.
pub fn with_cache(backend: Arc<dyn Backend>, opts: &Options, out_dir: &Path) -> Result<Arc<dyn Backend>, CliError> {
    if opts.cache_disabled() {
        return Ok(backend);
    }
    let dir = opts.cache_dir.clone().unwrap_or_else(|| out_dir.join("cache"));
    let cache = ResponseCache::open(&dir).map_err(CliError::output(dir))?;
    Ok(Arc::new(CachedBackend::new(backend, cache)))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::output(dir))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("record serializes");
    text.push('\n');
    fs::write(path, text).map_err(CliError::output(path))
}

pub fn cmd_validate(opts: &Options) -> Result<Dataset, CliError> {
    load(opts)
}

pub struct KnowledgeOutcome {
    pub artifact: KnowledgeArtifact,
    pub path: PathBuf,
}

/// Stage one only: discovers pairs, describes them, writes `knowledge.json`.
pub async fn cmd_knowledge(opts: &Options, backend: &dyn Backend) -> Result<KnowledgeOutcome, CliError> {
    if opts.strategy() != Strategy::Proposed {
        return Err(CliError::Usage(format!(
            "knowledge is only built for the proposed strategy, not {}",
            opts.strategy()
        )));
    }
    let dataset = load(opts)?;
    let config = opts.strategy_config(&dataset)?;
    let out = opts.out_dir(".");
    create_dir(&out)?;
    let artifact = build_knowledge(backend, &dataset, &config).await.map_err(CliError::stage("knowledge"))?;
    let path = out.join(KNOWLEDGE_FILE);
    write_knowledge(&path, &artifact).map_err(CliError::written)?;
    Ok(KnowledgeOutcome { artifact, path })
}

pub struct ClassifyOutcome {
    pub record: ExperimentRecord,
    pub predictions_path: PathBuf,
}

fn check_artifact(artifact: &KnowledgeArtifact, dataset: &Dataset, path: &Path) -> Result<(), CliError> {
    if artifact.dataset != dataset.name {
        return Err(CliError::Usage(format!(
            "{} was built for dataset {:?}, not {:?}",
            path.display(),
            artifact.dataset,
            dataset.name
        )));
    }
    Ok(())
}

/// Writes whatever predictions exist, then reports a fatal failure ratio.
fn settle(result: Result<ExperimentRecord, PipelineError>, path: &Path) -> Result<ExperimentRecord, CliError> {
    match result {
        Ok(record) => {
            write_predictions(path, &record.prediction_records()).map_err(CliError::written)?;
            Ok(record)
        }
        Err(PipelineError::TooManyFailures { failed, total, max_ratio, record }) => {
            write_predictions(path, &record.prediction_records()).map_err(CliError::written)?;
            Err(CliError::Pipeline {
                stage: "classification",
                source: PipelineError::TooManyFailures { failed, total, max_ratio, record },
            })
        }
        Err(e) => Err(CliError::stage("classification")(e)),
    }
}

/// Classifies every episode and writes `predictions.jsonl`.
pub async fn cmd_classify(opts: &Options, backend: &dyn Backend) -> Result<ClassifyOutcome, CliError> {
    let dataset = load(opts)?;
    let config = opts.strategy_config(&dataset)?;
    let out = opts.out_dir(".");
    create_dir(&out)?;

    let artifact = match (config.strategy, &opts.knowledge, opts.inline_knowledge.unwrap_or(false)) {
        (Strategy::Proposed, Some(path), _) => {
            let artifact = read_knowledge(path)?;
            check_artifact(&artifact, &dataset, path)?;
            Some(artifact)
        }
        (Strategy::Proposed, None, true) => {
            let artifact = build_knowledge(backend, &dataset, &config).await.map_err(CliError::stage("knowledge"))?;
            write_knowledge(&out.join(KNOWLEDGE_FILE), &artifact).map_err(CliError::written)?;
            Some(artifact)
        }
        (Strategy::Proposed, None, false) => {
            return Err(CliError::Usage(
                "--strategy proposed needs --knowledge <FILE> or --inline-knowledge".into(),
            ))
        }
        _ => None,
    };

    let predictions_path = out.join(PREDICTIONS_FILE);
    let record = settle(classify_dataset(backend, &dataset, &config, artifact).await, &predictions_path)?;
    Ok(ClassifyOutcome { record, predictions_path })
}

pub struct Evaluation {
    pub label: ReportLabel,
    pub metrics: MetricsReport,
    pub matrix: ConfusionMatrix,
}

pub struct EvalOutcome {
    pub evaluations: Vec<Evaluation>,
    pub written: Vec<PathBuf>,
}

pub fn evaluate(outcomes: &[ScoredEpisode], dataset: &Dataset, strategy: &str) -> Result<Evaluation, CliError> {
    Ok(Evaluation {
        label: ReportLabel {
            dataset: dataset.name.clone(),
            strategy: strategy.to_string(),
        },
        metrics: score(outcomes, dataset)?,
        matrix: confusion(outcomes, dataset)?,
    })
}

/// `runs/x/predictions.jsonl` is labeled `x`; any other file by its stem.
fn label_for(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if stem == "predictions" {
        if let Some(parent) = path.parent().and_then(Path::file_name) {
            return parent.to_string_lossy().into_owned();
        }
    }
    stem
}

/// Scores one or more predictions files. One file writes its report into
/// `--out`; several write one subdirectory each plus a comparison table.
pub fn cmd_eval(opts: &Options) -> Result<EvalOutcome, CliError> {
    let dataset = load(opts)?;
    let files = opts.predictions.as_deref().unwrap_or_default();
    if files.is_empty() {
        return Err(CliError::Usage("--predictions <FILE> is required".into()));
    }
    let out = opts.out_dir(".");

    let mut evaluations = Vec::with_capacity(files.len());
    for (i, file) in files.iter().enumerate() {
        let outcomes = read_predictions(file)?
            .iter()
            .map(|r| ScoredEpisode::from_record(r, &dataset.activities))
            .collect::<Result<Vec<_>, _>>()?;
        let mut label = match (files.len(), opts.strategy) {
            (1, Some(s)) => s.to_string(),
            _ => label_for(file),
        };
        if evaluations.iter().any(|e: &Evaluation| e.label.strategy == label) {
            label = format!("{label}-{}", i + 1);
        }
        evaluations.push(evaluate(&outcomes, &dataset, &label)?);
    }

    let mut written = Vec::new();
    if let [single] = evaluations.as_slice() {
        written.extend(emit_report(&single.label, &single.metrics, &single.matrix, &out)?);
    } else {
        for e in &evaluations {
            written.extend(emit_report(&e.label, &e.metrics, &e.matrix, &out.join(&e.label.strategy))?);
        }
        let entries: Vec<_> = evaluations.iter().map(|e| (e.label.clone(), e.metrics.clone())).collect();
        written.push(emit_comparison(&entries, &out)?);
    }
    Ok(EvalOutcome { evaluations, written })
}

pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub record: ExperimentRecord,
    pub evaluation: Evaluation,
}

/// Creates a fresh `run-<UTC timestamp>-<strategy>` directory under `root`.
/// Never reuses an existing directory: a numeric suffix is added instead.
pub fn create_run_dir(root: &Path, strategy: Strategy) -> Result<PathBuf, CliError> {
    create_dir(root)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("run-{stamp}-{strategy}");
    for n in 1.. {
        let name = if n == 1 { base.clone() } else { format!("{base}-{n}") };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(CliError::output(dir)(e)),
        }
    }
    unreachable!("unbounded suffix search")
}

/// Validate, build knowledge (proposed only), classify and score, all
/// persisted in a new run directory together with the effective settings.
pub async fn cmd_run(opts: &Options, backend: &dyn Backend) -> Result<RunOutcome, CliError> {
    let dataset = load(opts)?;
    let config = opts.strategy_config(&dataset)?;
    let run_dir = create_run_dir(&opts.out_dir(DEFAULT_RUNS_DIR), config.strategy)?;
    tracing::info!(dir = %run_dir.display(), "run directory");

    let echo = format!("# backend: {}\n{}", backend.id(), opts.effective().to_toml());
    fs::write(run_dir.join(CONFIG_FILE), echo).map_err(CliError::output(run_dir.join(CONFIG_FILE)))?;

    let artifact = match config.strategy {
        Strategy::Proposed => {
            let artifact = build_knowledge(backend, &dataset, &config).await.map_err(CliError::stage("knowledge"))?;
            write_knowledge(&run_dir.join(KNOWLEDGE_FILE), &artifact).map_err(CliError::written)?;
            Some(artifact)
        }
        _ => None,
    };

    let record = settle(
        classify_dataset(backend, &dataset, &config, artifact).await,
        &run_dir.join(PREDICTIONS_FILE),
    )?;
    write_json(&run_dir.join(RECORD_FILE), &record)?;

    let evaluation = evaluate(&record.scored_episodes(), &dataset, config.strategy.name())?;
    emit_report(&evaluation.label, &evaluation.metrics, &evaluation.matrix, &run_dir)?;
    Ok(RunOutcome {
        run_dir,
        record,
        evaluation,
    })
}
