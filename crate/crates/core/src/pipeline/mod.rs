//! The two-stage method and the baselines, end to end.
//!
//! Stage one asks the backend for `k` confusable activity pairs, then for a
//! description contrasting each pair in terms of objects; the descriptions
//! are merged into a [`KnowledgeBase`]. Stage two classifies every episode
//! with that knowledge in the prompt. Baselines skip stage one and classify
//! with their own knowledge statement (none, retrieved text, exemplars).

mod files;
pub mod parse;

use std::collections::HashSet;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::domain::{ActivityPair, Dataset, Episode, KnowledgeBase, Prediction};
use crate::llm::{cache_key, Backend, CompletionRequest, GenerationParams, LlmError};
use crate::prompt::{
    render_classification, render_pair_description, render_pair_discovery, Exemplar, Knowledge, PromptContext,
    PromptError, Strategy,
};

pub use files::{
    read_knowledge, read_predictions, write_knowledge, write_predictions, FileError, PredictionRecord, ABSTAIN, FAILED,
};
pub use parse::{parse_answer, parse_descriptions, parse_pair_list, PairList, ParsedAnswer};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid strategy configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{stage}: {source}")]
    Backend {
        stage: &'static str,
        #[source]
        source: LlmError,
    },
    #[error("no activity pairs could be parsed from the completion:\n{raw}")]
    NoPairsParsed { raw: String },
    #[error("no activity descriptions could be parsed from any pair completion")]
    EmptyKnowledge { failures: Vec<DescriptionFailure> },
    #[error("{failed} of {total} episodes failed, above the allowed ratio {max_ratio}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        max_ratio: f64,
        record: Box<ExperimentRecord>,
    },
}

/// Everything that selects and parameterizes a strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    /// Pairs requested from the discovery prompt.
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplars: Option<Vec<Exemplar>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_text: Option<String>,
    pub max_parallel: usize,
    /// Runs with a larger share of failed episodes are fatal.
    pub max_failure_ratio: f64,
    pub params: GenerationParams,
}

impl StrategyConfig {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            k: 3,
            exemplars: None,
            retrieval_text: None,
            max_parallel: 4,
            max_failure_ratio: 0.5,
            params: GenerationParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if self.max_parallel == 0 {
            return fail("max_parallel must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.max_failure_ratio) {
            return fail("max_failure_ratio must be within [0, 1]");
        }
        match (self.strategy, self.exemplars.is_some()) {
            (Strategy::FewShot, false) => return fail("few-shot requires exemplars"),
            (s, true) if s != Strategy::FewShot => return fail("exemplars are only used by few-shot"),
            _ => {}
        }
        match (self.strategy, self.retrieval_text.is_some()) {
            (Strategy::RetrievalKnowledge, false) => return fail("retrieval requires retrieval text"),
            (s, true) if s != Strategy::RetrievalKnowledge => return fail("retrieval text is only used by retrieval"),
            _ => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionFailure {
    pub pair: ActivityPair,
    /// Pair members the completion gave no description block for.
    pub missing: Vec<String>,
    pub raw: String,
}

/// Stage-one output, persisted as the knowledge artifact file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeArtifact {
    pub dataset: String,
    pub k: usize,
    pub pairs: Vec<ActivityPair>,
    pub knowledge: KnowledgeBase,
    pub description_failures: Vec<DescriptionFailure>,
    pub pair_warnings: Vec<String>,
    pub prompt_keys: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeFailure {
    pub episode_id: String,
    pub error: String,
}

/// Everything one run produced. Contains no timestamps or latencies, so two
/// runs over the same inputs serialize identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub dataset: String,
    pub strategy: Strategy,
    pub config: StrategyConfig,
    pub backend_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge: Option<KnowledgeArtifact>,
    /// Sorted by episode id.
    pub predictions: Vec<Prediction>,
    /// Sorted by episode id.
    pub failures: Vec<EpisodeFailure>,
    /// Cache keys of the classification prompts, in episode-id order.
    pub prompt_keys: Vec<String>,
}

#[derive(Debug)]
pub struct PairDiscovery {
    pub pairs: Vec<ActivityPair>,
    pub warnings: Vec<String>,
    pub raw: String,
    pub prompt_key: String,
}

fn backend_err(stage: &'static str) -> impl FnOnce(LlmError) -> PipelineError {
    move |source| PipelineError::Backend { stage, source }
}

/// Asks for `k` hard-to-distinguish pairs and parses at most `k` distinct ones.
pub async fn discover_confusable_pairs(
    backend: &dyn Backend,
    dataset: &Dataset,
    k: usize,
    params: &GenerationParams,
) -> Result<PairDiscovery, PipelineError> {
    let prompt = render_pair_discovery(PromptContext::from(dataset), k)?;
    let request = CompletionRequest::new(prompt, params);
    let prompt_key = cache_key(&backend.id(), &request);
    let result = crate::llm::complete(backend, &request).await.map_err(backend_err("pair discovery"))?;

    let parsed = parse_pair_list(&result.text, &dataset.activities);
    let mut seen = HashSet::new();
    let pairs: Vec<ActivityPair> = parsed.pairs.into_iter().filter(|p| seen.insert(p.clone())).take(k).collect();
    for w in &parsed.warnings {
        tracing::warn!("pair discovery: {w}");
    }
    if pairs.is_empty() {
        return Err(PipelineError::NoPairsParsed { raw: result.text });
    }
    Ok(PairDiscovery {
        pairs,
        warnings: parsed.warnings,
        raw: result.text,
        prompt_key,
    })
}

#[derive(Debug)]
pub struct GeneratedKnowledge {
    pub knowledge: KnowledgeBase,
    pub failures: Vec<DescriptionFailure>,
    pub prompt_keys: Vec<String>,
}

/// Describes each pair and merges the per-activity blocks into one knowledge base.
///
/// Pairs are processed sequentially in the given order. A pair whose
/// completion lacks a block for one of its members is recorded as a
/// [`DescriptionFailure`]; the call fails only if nothing at all was parsed.
pub async fn generate_activity_knowledge(
    backend: &dyn Backend,
    pairs: &[ActivityPair],
    dataset: &Dataset,
    params: &GenerationParams,
) -> Result<GeneratedKnowledge, PipelineError> {
    if pairs.is_empty() {
        return Err(PipelineError::Config("no pairs to describe".into()));
    }
    let ctx = PromptContext::from(dataset);
    let mut knowledge = KnowledgeBase::default();
    let mut failures = Vec::new();
    let mut prompt_keys = Vec::with_capacity(pairs.len());

    for pair in pairs {
        let request = CompletionRequest::new(render_pair_description(ctx, pair)?, params);
        prompt_keys.push(cache_key(&backend.id(), &request));
        let result = crate::llm::complete(backend, &request).await.map_err(backend_err("pair description"))?;

        let blocks = parse_descriptions(&result.text, pair, &dataset.activities);
        for (activity, text) in &blocks {
            knowledge.append(activity, text, pair);
        }
        let missing: Vec<String> = [&pair.first, &pair.second]
            .into_iter()
            .filter(|m| !blocks.iter().any(|(a, _)| a == *m))
            .map(ToString::to_string)
            .collect();
        if !missing.is_empty() {
            tracing::warn!(pair = %pair, ?missing, "pair description lacks blocks");
            failures.push(DescriptionFailure {
                pair: pair.clone(),
                missing,
                raw: result.text,
            });
        }
    }

    if knowledge.is_empty() {
        return Err(PipelineError::EmptyKnowledge { failures });
    }
    knowledge.sort_by_activity_order(&dataset.activities);
    Ok(GeneratedKnowledge {
        knowledge,
        failures,
        prompt_keys,
    })
}

/// Runs stage one: pair discovery followed by pair descriptions.
pub async fn build_knowledge(
    backend: &dyn Backend,
    dataset: &Dataset,
    config: &StrategyConfig,
) -> Result<KnowledgeArtifact, PipelineError> {
    let discovery = discover_confusable_pairs(backend, dataset, config.k, &config.params).await?;
    let generated = generate_activity_knowledge(backend, &discovery.pairs, dataset, &config.params).await?;
    let mut prompt_keys = vec![discovery.prompt_key];
    prompt_keys.extend(generated.prompt_keys);
    Ok(KnowledgeArtifact {
        dataset: dataset.name.clone(),
        k: config.k,
        pairs: discovery.pairs,
        knowledge: generated.knowledge,
        description_failures: generated.failures,
        pair_warnings: discovery.warnings,
        prompt_keys,
    })
}

fn knowledge_for<'a>(config: &'a StrategyConfig, artifact: Option<&'a KnowledgeArtifact>) -> Result<Knowledge<'a>, PipelineError> {
    Ok(match config.strategy {
        Strategy::Proposed => Knowledge::Generated(
            &artifact
                .ok_or_else(|| PipelineError::Config("proposed strategy requires a knowledge artifact".into()))?
                .knowledge,
        ),
        Strategy::ZeroShot => Knowledge::None,
        Strategy::RetrievalKnowledge => Knowledge::Retrieved(config.retrieval_text.as_deref().unwrap_or_default()),
        Strategy::FewShot => Knowledge::Exemplars(config.exemplars.as_deref().unwrap_or_default()),
    })
}

/// Classifies one episode. Returns the prediction with the prompt's cache key.
pub async fn classify_episode(
    backend: &dyn Backend,
    dataset: &Dataset,
    knowledge: Knowledge<'_>,
    episode: &Episode,
    config: &StrategyConfig,
) -> Result<(Prediction, String), PipelineError> {
    let prompt = render_classification(config.strategy, PromptContext::from(dataset), knowledge, &episode.objects)?;
    let request = CompletionRequest::new(prompt, &config.params);
    let key = cache_key(&backend.id(), &request);
    let result = crate::llm::complete(backend, &request).await.map_err(backend_err("classification"))?;
    let parsed = parse_answer(&result.text, &dataset.activities);
    Ok((
        Prediction {
            episode_id: episode.id.clone(),
            label: parsed.answer,
            explanation: parsed.explanation,
            raw: result.text,
        },
        key,
    ))
}

type EpisodeOutcome = Result<(Prediction, String), PipelineError>;

/// Classifies every episode using already-built knowledge (if the strategy needs it).
pub async fn classify_dataset(
    backend: &dyn Backend,
    dataset: &Dataset,
    config: &StrategyConfig,
    artifact: Option<KnowledgeArtifact>,
) -> Result<ExperimentRecord, PipelineError> {
    config.validate()?;
    let knowledge = knowledge_for(config, artifact.as_ref())?;

    // Render once up front so a knowledge/strategy mismatch fails the run
    // rather than every episode.
    if let Some(first) = dataset.episodes.first() {
        render_classification(config.strategy, PromptContext::from(dataset), knowledge, &first.objects)?;
    }

    let mut outcomes: Vec<(String, EpisodeOutcome)> = stream::iter(&dataset.episodes)
        .map(|episode| async move {
            let outcome = classify_episode(backend, dataset, knowledge, episode, config).await;
            (episode.id.clone(), outcome)
        })
        .buffer_unordered(config.max_parallel)
        .collect()
        .await;
    outcomes.sort_by(|a, b| a.0.cmp(&b.0));

    let mut predictions = Vec::new();
    let mut failures = Vec::new();
    let mut prompt_keys = Vec::new();
    for (episode_id, outcome) in outcomes {
        match outcome {
            Ok((prediction, key)) => {
                predictions.push(prediction);
                prompt_keys.push(key);
            }
            Err(e) => {
                tracing::warn!(episode = %episode_id, error = %e, "episode failed");
                failures.push(EpisodeFailure {
                    episode_id,
                    error: e.to_string(),
                });
            }
        }
    }

    let record = ExperimentRecord {
        dataset: dataset.name.clone(),
        strategy: config.strategy,
        config: config.clone(),
        backend_id: backend.id(),
        knowledge: artifact,
        predictions,
        failures,
        prompt_keys,
    };

    let total = dataset.episodes.len();
    let failed = record.failures.len();
    if total > 0 && failed as f64 / total as f64 > config.max_failure_ratio {
        return Err(PipelineError::TooManyFailures {
            failed,
            total,
            max_ratio: config.max_failure_ratio,
            record: Box::new(record),
        });
    }
    Ok(record)
}

/// Full run: stage one when the strategy needs it, then classification.
pub async fn run_experiment(
    backend: &dyn Backend,
    dataset: &Dataset,
    config: &StrategyConfig,
) -> Result<ExperimentRecord, PipelineError> {
    config.validate()?;
    let artifact = match config.strategy {
        Strategy::Proposed => Some(build_knowledge(backend, dataset, config).await?),
        _ => None,
    };
    classify_dataset(backend, dataset, config, artifact).await
}
