//! Candidate generators and quality scorers.
//!
//! Three families ship here: offline (JSONL-backed), synthetic (parametric
//! score models for simulation) and a generic HTTP adapter.

use std::collections::HashSet;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Candidate, EngineError};
use crate::prompts::PromptLibrary;

pub mod http;
pub mod offline;
pub mod synthetic;

pub use http::{HttpGenerator, HttpScorer, HttpSettings};
pub use offline::{OfflineGenerator, OfflineRecord, OfflineScorer, OfflineStore, StoredCandidate};
pub use synthetic::{Distribution, SyntheticGenerator, SyntheticScoreModel};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("no record for source {source_id:?} and producer {producer_id:?}")]
    RecordNotFound { source_id: String, producer_id: String },
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("response schema mismatch: {0}")]
    Schema(String),
    #[error("non-finite score {0}")]
    NonFiniteScore(f64),
    #[error("candidate carries no score")]
    MissingScore,
    #[error("candidate text is empty")]
    EmptyCandidate,
}

/// Item being translated. `seed` drives synthetic draws for this item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceItem {
    pub source_id: String,
    pub text: String,
    #[serde(default)]
    pub seed: u64,
}

impl SourceItem {
    pub fn new(source_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            source_id: source_id.into(),
            text: text.into(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// A provider result together with the number of transport attempts it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempted<T> {
    pub value: T,
    pub attempts: u32,
}

impl<T> Attempted<T> {
    pub fn once(value: T) -> Self {
        Self { value, attempts: 1 }
    }
}

pub trait Generator: Send + Sync {
    fn producer_id(&self) -> &str;

    fn generate(&self, source: &SourceItem) -> Result<Attempted<Candidate>, ProviderError>;

    /// Whether episodes for different sources may call this concurrently.
    fn concurrent_safe(&self) -> bool {
        true
    }
}

pub trait Scorer: Send + Sync {
    fn score(&self, source: &SourceItem, candidate: &Candidate) -> Result<Attempted<f64>, ProviderError>;

    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// Returns the score the generator already attached to the candidate.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassthroughScorer;

impl Scorer for PassthroughScorer {
    fn score(&self, _source: &SourceItem, candidate: &Candidate) -> Result<Attempted<f64>, ProviderError> {
        if candidate.text.is_empty() {
            return Err(ProviderError::EmptyCandidate);
        }
        match candidate.score {
            Some(s) if s.is_finite() => Ok(Attempted::once(s)),
            Some(s) => Err(ProviderError::NonFiniteScore(s)),
            None => Err(ProviderError::MissingScore),
        }
    }
}

/// Baselines plus one generator per prompt id.
#[derive(Clone)]
pub struct ProviderSet {
    pub baseline_a: Arc<dyn Generator>,
    pub baseline_b: Arc<dyn Generator>,
    pub prompts: IndexMap<String, Arc<dyn Generator>>,
}

impl std::fmt::Debug for ProviderSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProviderSet")
            .field("baseline_a", &self.baseline_a.producer_id())
            .field("baseline_b", &self.baseline_b.producer_id())
            .field("prompts", &self.prompts.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl ProviderSet {
    pub fn new(
        baseline_a: Arc<dyn Generator>,
        baseline_b: Arc<dyn Generator>,
        prompts: IndexMap<String, Arc<dyn Generator>>,
    ) -> Result<Self, EngineError> {
        let set = Self {
            baseline_a,
            baseline_b,
            prompts,
        };
        let mut seen = HashSet::new();
        for id in set.producer_ids() {
            if id.is_empty() {
                return Err(EngineError::InvalidConfig("empty producer_id".into()));
            }
            if !seen.insert(id.to_string()) {
                return Err(EngineError::InvalidConfig(format!("duplicate producer_id {id:?}")));
            }
        }
        Ok(set)
    }

    pub fn producer_ids(&self) -> impl Iterator<Item = &str> {
        [self.baseline_a.producer_id(), self.baseline_b.producer_id()]
            .into_iter()
            .chain(self.prompts.values().map(|g| g.producer_id()))
    }

    pub fn prompt(&self, prompt_id: &str) -> Result<&dyn Generator, EngineError> {
        self.prompts
            .get(prompt_id)
            .map(|g| g.as_ref())
            .ok_or_else(|| EngineError::InvalidConfig(format!("no generator for prompt {prompt_id:?}")))
    }

    /// Exactly one generator per configured prompt id, nothing extra.
    pub fn check_covers(&self, prompt_ids: &[String]) -> Result<(), EngineError> {
        for id in prompt_ids {
            self.prompt(id)?;
        }
        if self.prompts.len() != prompt_ids.len() {
            let configured: HashSet<&str> = prompt_ids.iter().map(String::as_str).collect();
            let extra: Vec<&str> = self
                .prompts
                .keys()
                .map(String::as_str)
                .filter(|k| !configured.contains(k))
                .collect();
            return Err(EngineError::InvalidConfig(format!(
                "generators for unconfigured prompts: {extra:?}"
            )));
        }
        Ok(())
    }

    pub fn concurrent_safe(&self) -> bool {
        self.baseline_a.concurrent_safe()
            && self.baseline_b.concurrent_safe()
            && self.prompts.values().all(|g| g.concurrent_safe())
    }
}

/// Serializable description of one generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub producer_id: String,
    #[serde(flatten)]
    pub kind: GeneratorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum GeneratorKind {
    Offline,
    Synthetic(SyntheticScoreModel),
    Http(HttpSettings),
}

/// Generator specs for one routing setup, keyed by prompt id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvidersConfig {
    pub baseline_a: GeneratorSpec,
    pub baseline_b: GeneratorSpec,
    #[serde(default)]
    pub prompts: IndexMap<String, GeneratorSpec>,
    /// Used for prompt ids without an explicit entry; the producer id
    /// becomes `prompt:<id>`.
    #[serde(default)]
    pub prompt_default: Option<GeneratorKind>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ScorerSpec {
    #[default]
    Passthrough,
    Offline,
    Http(HttpSettings),
}

/// Shared resources providers may need while being built.
#[derive(Clone, Default)]
pub struct BuildContext {
    pub store: Option<Arc<OfflineStore>>,
    pub library: Option<Arc<PromptLibrary>>,
}

impl ProvidersConfig {
    /// Resolves the spec for every prompt id, in `prompt_ids` order.
    pub fn resolve_prompts(&self, prompt_ids: &[String]) -> Result<IndexMap<String, GeneratorSpec>, ProviderError> {
        let mut out = IndexMap::new();
        for id in prompt_ids {
            let spec = match (self.prompts.get(id), &self.prompt_default) {
                (Some(spec), _) => spec.clone(),
                (None, Some(kind)) => GeneratorSpec {
                    producer_id: format!("prompt:{id}"),
                    kind: kind.clone(),
                },
                (None, None) => {
                    return Err(ProviderError::InvalidConfig(format!(
                        "no generator configured for prompt {id:?}"
                    )))
                }
            };
            out.insert(id.clone(), spec);
        }
        if let Some(extra) = self.prompts.keys().find(|k| !prompt_ids.contains(k)) {
            return Err(ProviderError::InvalidConfig(format!(
                "generator configured for prompt {extra:?} which is not in prompt_ids"
            )));
        }
        Ok(out)
    }

    pub fn build(&self, prompt_ids: &[String], ctx: &BuildContext) -> Result<ProviderSet, EngineError> {
        let invalid = |e: ProviderError| EngineError::InvalidConfig(e.to_string());
        let baseline_a = build_generator(&self.baseline_a, None, true, ctx).map_err(invalid)?;
        let baseline_b = build_generator(&self.baseline_b, None, false, ctx).map_err(invalid)?;
        let mut prompts = IndexMap::new();
        for (id, spec) in self.resolve_prompts(prompt_ids).map_err(invalid)? {
            let g = build_generator(&spec, Some(&id), false, ctx).map_err(invalid)?;
            prompts.insert(id, g);
        }
        ProviderSet::new(baseline_a, baseline_b, prompts)
    }

    /// Every producer id that a record must contain for offline routing.
    pub fn offline_producers(&self, prompt_ids: &[String]) -> Result<Vec<String>, ProviderError> {
        let mut ids = Vec::new();
        for spec in [&self.baseline_a, &self.baseline_b] {
            if spec.kind == GeneratorKind::Offline {
                ids.push(spec.producer_id.clone());
            }
        }
        for spec in self.resolve_prompts(prompt_ids)?.values() {
            if spec.kind == GeneratorKind::Offline {
                ids.push(spec.producer_id.clone());
            }
        }
        Ok(ids)
    }
}

/// `anchor` marks baseline A, whose synthetic latent the others correlate with.
pub fn build_generator(
    spec: &GeneratorSpec,
    prompt_id: Option<&str>,
    anchor: bool,
    ctx: &BuildContext,
) -> Result<Arc<dyn Generator>, ProviderError> {
    if spec.producer_id.is_empty() {
        return Err(ProviderError::InvalidConfig("producer_id must be non-empty".into()));
    }
    Ok(match &spec.kind {
        GeneratorKind::Offline => {
            let store = ctx
                .store
                .clone()
                .ok_or_else(|| ProviderError::InvalidConfig("offline generator needs a record file".into()))?;
            Arc::new(OfflineGenerator::new(spec.producer_id.clone(), store))
        }
        GeneratorKind::Synthetic(model) => {
            Arc::new(SyntheticGenerator::new(spec.producer_id.clone(), model.clone(), anchor)?)
        }
        GeneratorKind::Http(settings) => Arc::new(HttpGenerator::new(
            spec.producer_id.clone(),
            prompt_id.map(str::to_string),
            settings.clone(),
            ctx.library.clone(),
        )?),
    })
}

pub fn build_scorer(spec: &ScorerSpec, ctx: &BuildContext) -> Result<Arc<dyn Scorer>, ProviderError> {
    Ok(match spec {
        ScorerSpec::Passthrough => Arc::new(PassthroughScorer),
        ScorerSpec::Offline => {
            let store = ctx
                .store
                .clone()
                .ok_or_else(|| ProviderError::InvalidConfig("offline scorer needs a record file".into()))?;
            Arc::new(OfflineScorer::new(store))
        }
        ScorerSpec::Http(settings) => Arc::new(HttpScorer::new(settings.clone())?),
    })
}

/// Constant-score generators for tests and examples.
pub mod testing {
    use super::*;

    #[derive(Debug, Clone)]
    pub struct FixedGenerator {
        pub producer_id: String,
        pub score: f64,
    }

    impl Generator for FixedGenerator {
        fn producer_id(&self) -> &str {
            &self.producer_id
        }

        fn generate(&self, _source: &SourceItem) -> Result<Attempted<Candidate>, ProviderError> {
            Ok(Attempted::once(
                Candidate::new(self.producer_id.clone(), format!("<{}>", self.producer_id)).with_score(self.score),
            ))
        }
    }

    fn fixed(id: &str, score: f64) -> Arc<dyn Generator> {
        Arc::new(FixedGenerator {
            producer_id: id.to_string(),
            score,
        })
    }

    /// Baselines `baseline_a`/`baseline_b`; prompt `p` is produced by `prompt:p`.
    pub fn fixed_providers(score_a: f64, score_b: f64, prompts: &[(&str, f64)]) -> ProviderSet {
        let prompts = prompts
            .iter()
            .map(|(id, s)| (id.to_string(), fixed(&format!("prompt:{id}"), *s)))
            .collect();
        ProviderSet::new(fixed("baseline_a", score_a), fixed("baseline_b", score_b), prompts)
            .expect("fixed providers are well formed")
    }
}
