//! Run settings: command-line flags layered over an optional TOML file.
//!
//! Every flag has a key of the same name in the file (`--retrieval-text`
//! becomes `retrieval-text = "..."`). Precedence is flag, then environment
//! (cache settings only), then file, then built-in default. Relative paths in
//! a file are taken relative to the file's directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use har_core::llm::{GenerationParams, DEFAULT_MODEL};
use har_core::prompt::{Exemplar, Strategy};
use har_core::{Dataset, StrategyConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CACHE_DIR_ENV: &str = "HAR_CACHE_DIR";
pub const NO_CACHE_ENV: &str = "HAR_NO_CACHE";

/// All settings a subcommand can take. Unset fields fall through to the
/// config file and then to defaults.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Options {
    /// Dataset manifest (TOML).
    #[arg(long, value_name = "MANIFEST")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,

    /// proposed, zero-shot, retrieval or few-shot [default: proposed].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,

    /// Number of confusable pairs to request [default: 3].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,

    /// Labeled exemplar file for few-shot (same line format as episodes).
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exemplars: Option<PathBuf>,

    /// File holding the externally retrieved knowledge text.
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retrieval_text: Option<PathBuf>,

    /// "mock:<replay-file>" or "http:<base-url>".
    #[arg(long, value_name = "SPEC")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,

    /// Model id sent to the backend.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,

    /// Output directory (for `run`, the parent of the run directories).
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,

    /// Maximum classification requests in flight [default: 4].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parallel: Option<usize>,

    /// Knowledge artifact to classify with (proposed strategy).
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knowledge: Option<PathBuf>,

    /// Build the knowledge artifact as part of `classify`.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inline_knowledge: Option<bool>,

    /// Predictions file(s) to evaluate; repeat for a comparison table.
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictions: Option<Vec<PathBuf>>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,

    /// Share of failed episodes above which a run is fatal [default: 0.5].
    #[arg(long, value_name = "RATIO")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_failure_ratio: Option<f64>,

    /// Response cache directory [env: HAR_CACHE_DIR; default: <out>/cache].
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,

    /// Bypass the response cache [env: HAR_NO_CACHE=1].
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub no_cache: Option<bool>,
}

macro_rules! layer {
    ($top:expr, $bottom:expr, $($field:ident),+) => {
        Options { $($field: $top.$field.or($bottom.$field)),+ }
    };
}

impl Options {
    /// Field-wise: values set in `self` win over `lower`.
    pub fn over(self, lower: Options) -> Options {
        layer!(
            self, lower, dataset, strategy, k, exemplars, retrieval_text, backend, model, out, parallel, knowledge,
            inline_knowledge, predictions, temperature, top_p, max_tokens, max_failure_ratio, cache_dir, no_cache
        )
    }

    /// Reads a config file, resolving its relative paths against its directory.
    pub fn from_file(path: &Path) -> Result<Options, CliError> {
        let config_err = |message: String| CliError::Config {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| config_err(e.to_string()))?;
        let opts: Options = toml::from_str(&text).map_err(|e| config_err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Ok(opts.rebase(base))
    }

    fn rebase(mut self, base: &Path) -> Options {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix(&mut self.dataset);
        fix(&mut self.exemplars);
        fix(&mut self.retrieval_text);
        fix(&mut self.out);
        fix(&mut self.knowledge);
        fix(&mut self.cache_dir);
        if let Some(files) = &mut self.predictions {
            for f in files.iter_mut().filter(|f| f.is_relative()) {
                *f = base.join(&*f);
            }
        }
        if let Some(spec) = &self.backend {
            if let Ok(BackendSpec::Mock(p)) = spec.parse() {
                if p.is_relative() {
                    self.backend = Some(BackendSpec::Mock(base.join(p)).to_string());
                }
            }
        }
        self
    }

    /// Environment layer: only the cache settings have variables.
    pub fn from_env() -> Options {
        Options {
            cache_dir: std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from),
            no_cache: std::env::var(NO_CACHE_ENV).ok().map(|v| v == "1"),
            ..Options::default()
        }
    }

    /// Flags over environment over file.
    pub fn resolve(flags: Options, config_file: Option<&Path>) -> Result<Options, CliError> {
        let file = match config_file {
            Some(path) => Options::from_file(path)?,
            None => Options::default(),
        };
        Ok(flags.over(Options::from_env()).over(file))
    }

    /// The effective settings as a config file, suitable for re-running.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("options serialize to TOML")
    }

    /// These settings with every defaulted value filled in, as echoed into
    /// run directories.
    pub fn effective(&self) -> Options {
        let params = self.params();
        let defaults = StrategyConfig::new(self.strategy());
        Options {
            strategy: Some(self.strategy()),
            k: Some(self.k.unwrap_or(defaults.k)),
            model: Some(params.model_id),
            parallel: Some(self.parallel.unwrap_or(defaults.max_parallel)),
            temperature: Some(params.temperature),
            top_p: Some(params.top_p),
            max_tokens: Some(params.max_tokens),
            max_failure_ratio: Some(self.max_failure_ratio.unwrap_or(defaults.max_failure_ratio)),
            no_cache: Some(self.cache_disabled()),
            ..self.clone()
        }
    }

    pub fn dataset_path(&self) -> Result<&Path, CliError> {
        self.dataset.as_deref().ok_or_else(|| CliError::Usage("--dataset is required".into()))
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy.unwrap_or(Strategy::Proposed)
    }

    pub fn out_dir(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }

    pub fn backend_spec(&self) -> Result<BackendSpec, CliError> {
        self.backend
            .as_deref()
            .ok_or_else(|| CliError::Usage("--backend is required (mock:<file> or http:<base-url>)".into()))?
            .parse()
            .map_err(CliError::Usage)
    }

    pub fn cache_disabled(&self) -> bool {
        self.no_cache.unwrap_or(false)
    }

    pub fn params(&self) -> GenerationParams {
        let d = GenerationParams::default();
        GenerationParams {
            model_id: self.model.clone().unwrap_or_else(|| DEFAULT_MODEL.to_string()),
            temperature: self.temperature.unwrap_or(d.temperature),
            top_p: self.top_p.unwrap_or(d.top_p),
            max_tokens: self.max_tokens.unwrap_or(d.max_tokens),
        }
    }

    /// Builds the pipeline configuration, loading exemplars or retrieval
    /// text when the strategy uses them. Inputs meant for other strategies
    /// are ignored so one config file can serve every strategy.
    pub fn strategy_config(&self, dataset: &Dataset) -> Result<StrategyConfig, CliError> {
        let strategy = self.strategy();
        let mut config = StrategyConfig::new(strategy);
        config.k = self.k.unwrap_or(config.k);
        config.max_parallel = self.parallel.unwrap_or(config.max_parallel);
        config.max_failure_ratio = self.max_failure_ratio.unwrap_or(config.max_failure_ratio);
        config.params = self.params();

        match strategy {
            Strategy::FewShot => {
                let path = self
                    .exemplars
                    .as_deref()
                    .ok_or_else(|| CliError::Usage("--strategy few-shot requires --exemplars <FILE>".into()))?;
                config.exemplars = Some(Exemplar::load_file(path, &dataset.activities)?);
            }
            Strategy::RetrievalKnowledge => {
                let path = self
                    .retrieval_text
                    .as_deref()
                    .ok_or_else(|| CliError::Usage("--strategy retrieval requires --retrieval-text <FILE>".into()))?;
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                config.retrieval_text = Some(text.trim_end().to_string());
            }
            Strategy::Proposed | Strategy::ZeroShot => {}
        }
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }
}

/// Which completion backend to talk to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BackendSpec {
    /// Scripted replay file.
    Mock(PathBuf),
    /// Completions-compatible endpoint base URL.
    Http(String),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("invalid backend {s:?}: expected mock:<replay-file> or http:<base-url>");
        let (scheme, rest) = s.split_once(':').ok_or_else(bad)?;
        match scheme {
            "mock" if !rest.is_empty() => Ok(BackendSpec::Mock(PathBuf::from(rest))),
            // A bare URL such as http://host/v1 is accepted as-is.
            "http" | "https" if rest.starts_with("//") => Ok(BackendSpec::Http(s.to_string())),
            "http" if rest.contains("://") => Ok(BackendSpec::Http(rest.to_string())),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Mock(p) => write!(f, "mock:{}", p.display()),
            BackendSpec::Http(url) => write!(f, "http:{url}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backend_specs() {
        assert_eq!("mock:fx/mock.toml".parse(), Ok(BackendSpec::Mock("fx/mock.toml".into())));
        assert_eq!(
            "http:https://api.example.com/v1".parse(),
            Ok(BackendSpec::Http("https://api.example.com/v1".into()))
        );
        assert_eq!("http://localhost:8000/v1".parse(), Ok(BackendSpec::Http("http://localhost:8000/v1".into())));
        assert!("mock:".parse::<BackendSpec>().is_err());
        assert!("grpc:host".parse::<BackendSpec>().is_err());
        assert!("http:localhost".parse::<BackendSpec>().is_err());
        assert!("nonsense".parse::<BackendSpec>().is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = Options {
            k: Some(2),
            model: Some("file-model".into()),
            parallel: Some(8),
            ..Options::default()
        };
        let flags = Options {
            k: Some(5),
            ..Options::default()
        };
        let merged = flags.over(file);
        assert_eq!(merged.k, Some(5));
        assert_eq!(merged.model.as_deref(), Some("file-model"));
        assert_eq!(merged.parallel, Some(8));
    }

    #[test]
    fn file_paths_are_relative_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("har.toml");
        std::fs::write(
            &path,
            "dataset = \"data/manifest.toml\"\nbackend = \"mock:replay.toml\"\nstrategy = \"zero-shot\"\nno-cache = true\n",
        )
        .unwrap();
        let opts = Options::from_file(&path).unwrap();
        assert_eq!(opts.dataset, Some(dir.path().join("data/manifest.toml")));
        assert_eq!(opts.backend_spec().unwrap(), BackendSpec::Mock(dir.path().join("replay.toml")));
        assert_eq!(opts.strategy(), Strategy::ZeroShot);
        assert!(opts.cache_disabled());
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("har.toml");
        std::fs::write(&path, "datset = \"x\"\n").unwrap();
        assert!(matches!(Options::from_file(&path), Err(CliError::Config { .. })));
    }

    #[test]
    fn echo_round_trips() {
        let opts = Options {
            dataset: Some("m.toml".into()),
            strategy: Some(Strategy::RetrievalKnowledge),
            k: Some(1),
            predictions: Some(vec!["a.jsonl".into(), "b.jsonl".into()]),
            no_cache: Some(false),
            temperature: Some(0.0),
            ..Options::default()
        };
        let back: Options = toml::from_str(&opts.to_toml()).unwrap();
        assert_eq!(back, opts);
    }
}
