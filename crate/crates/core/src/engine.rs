//! Evidence accumulation with collapsing boundaries.
//!
//! A routing episode starts from two baseline candidates. The score gap
//! between them is the initial drift. Each strategy prompt then contributes
//! its score gap to baseline A as a diffusion increment, both boundaries are
//! multiplied by `exp(-decay)`, and the episode stops as soon as the drift
//! touches a boundary. Hitting the lower boundary returns baseline A; hitting
//! the upper boundary or running out of prompts returns the best-scored
//! candidate generated so far.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{Generator, ProviderError, ProviderSet, Scorer, SourceItem};
use crate::seed;

pub const DEFAULT_UPPER: f64 = 0.05;
pub const DEFAULT_LOWER: f64 = -0.05;
pub const DEFAULT_DECAY: f64 = 0.2;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid score {0}: scores must be finite")]
    InvalidScore(f64),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("generation failed for {producer_id}: {cause}")]
    GenerationFailed {
        producer_id: String,
        #[source]
        cause: ProviderError,
    },
    #[error("scoring failed for {producer_id}: {cause}")]
    ScoringFailed {
        producer_id: String,
        #[source]
        cause: ProviderError,
    },
}

impl EngineError {
    /// True for errors caused by configuration rather than by a provider at run time.
    pub fn is_validation(&self) -> bool {
        matches!(self, EngineError::InvalidConfig(_) | EngineError::InvalidScore(_))
    }
}

/// One translation hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub producer_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl Candidate {
    pub fn new(producer_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            producer_id: producer_id.into(),
            text: text.into(),
            score: None,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    fn score_or_neg_inf(&self) -> f64 {
        self.score.unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPair {
    pub upper: f64,
    pub lower: f64,
}

impl BoundaryPair {
    pub fn new(upper: f64, lower: f64) -> Result<Self, EngineError> {
        let pair = Self { upper, lower };
        pair.validate()?;
        Ok(pair)
    }

    pub fn symmetric(a: f64) -> Result<Self, EngineError> {
        Self::new(a, -a)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.upper.is_finite() && self.lower.is_finite()) {
            return Err(EngineError::InvalidConfig(format!(
                "boundaries must be finite, got ({}, {})",
                self.upper, self.lower
            )));
        }
        if !(self.upper > 0.0 && self.lower < 0.0) {
            return Err(EngineError::InvalidConfig(format!(
                "initial_upper must be > 0 and initial_lower < 0, got ({}, {})",
                self.upper, self.lower
            )));
        }
        Ok(())
    }

    /// Where `drift` sits relative to the pair; ties count as crossings.
    pub fn classify(&self, drift: f64) -> Crossing {
        if drift >= self.upper {
            Crossing::Upper
        } else if drift <= self.lower {
            Crossing::Lower
        } else {
            Crossing::Inside
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    Upper,
    Inside,
    Lower,
}

/// Drift = C(baseline B) - C(baseline A).
pub fn init_drift(score_a: f64, score_b: f64) -> Result<f64, EngineError> {
    Ok(finite(score_b)? - finite(score_a)?)
}

/// Diffusion_i = C(prompt candidate) - C(baseline A).
pub fn diffusion(score_prompt: f64, score_a: f64) -> Result<f64, EngineError> {
    Ok(finite(score_prompt)? - finite(score_a)?)
}

/// One multiplicative decay step applied to both boundaries.
pub fn decay_boundaries(b: BoundaryPair, decay: f64) -> Result<BoundaryPair, EngineError> {
    let factor = decay_factor(decay)?;
    Ok(BoundaryPair {
        upper: b.upper * factor,
        lower: b.lower * factor,
    })
}

fn decay_factor(decay: f64) -> Result<f64, EngineError> {
    if !(decay.is_finite() && decay >= 0.0) {
        return Err(EngineError::InvalidConfig(format!(
            "decay must be finite and >= 0, got {decay}"
        )));
    }
    Ok((-decay).exp())
}

fn finite(x: f64) -> Result<f64, EngineError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(EngineError::InvalidScore(x))
    }
}

/// Seeded permutation of prompt ids (Fisher–Yates over xorshift64*).
///
/// Without a seed one is drawn from system entropy; the seed actually used
/// is returned so it can be written into the decision.
pub fn shuffle_prompts(prompt_ids: &[String], seed: Option<u64>) -> (Vec<String>, u64) {
    let seed = seed.unwrap_or_else(rand::random);
    let mut order = prompt_ids.to_vec();
    seed::fisher_yates(&mut order, seed);
    (order, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingConfig {
    #[serde(default = "default_upper")]
    pub initial_upper: f64,
    #[serde(default = "default_lower")]
    pub initial_lower: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default)]
    pub prompt_ids: Vec<String>,
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
    #[serde(default)]
    pub check_initial_drift: bool,
}

fn default_upper() -> f64 {
    DEFAULT_UPPER
}
fn default_lower() -> f64 {
    DEFAULT_LOWER
}
fn default_decay() -> f64 {
    DEFAULT_DECAY
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            initial_upper: DEFAULT_UPPER,
            initial_lower: DEFAULT_LOWER,
            decay: DEFAULT_DECAY,
            prompt_ids: Vec::new(),
            shuffle_seed: None,
            check_initial_drift: false,
        }
    }
}

impl RoutingConfig {
    pub fn with_prompts<I, S>(prompt_ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            prompt_ids: prompt_ids.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn initial_boundaries(&self) -> BoundaryPair {
        BoundaryPair {
            upper: self.initial_upper,
            lower: self.initial_lower,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        self.initial_boundaries().validate()?;
        decay_factor(self.decay)?;
        let mut seen = std::collections::HashSet::new();
        for id in &self.prompt_ids {
            if id.is_empty() {
                return Err(EngineError::InvalidConfig("prompt_ids contains an empty id".into()));
            }
            if !seen.insert(id.as_str()) {
                return Err(EngineError::InvalidConfig(format!("duplicate prompt id {id:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    InitDrift,
    Diffusion,
}

/// One line of the audit trail.
///
/// The init step names baseline B and carries baseline A as the reference;
/// diffusion steps name the prompt producer. `score` is the raw score of the
/// named producer, so argmax decisions can be replayed from the trace alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step_kind: StepKind,
    pub producer_id: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_score: Option<f64>,
    pub diffusion_value: f64,
    pub drift_after: f64,
    pub upper_after: f64,
    pub lower_after: f64,
    pub stopped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalCase {
    UpperHit,
    Exhausted,
    LowerHit,
}

impl TerminalCase {
    pub const ALL: [TerminalCase; 3] = [TerminalCase::UpperHit, TerminalCase::Exhausted, TerminalCase::LowerHit];

    pub fn as_str(self) -> &'static str {
        match self {
            TerminalCase::UpperHit => "upper_hit",
            TerminalCase::Exhausted => "exhausted",
            TerminalCase::LowerHit => "lower_hit",
        }
    }
}

impl fmt::Display for TerminalCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub terminal_case: TerminalCase,
    pub chosen: Candidate,
    /// Generator invocations: both baselines plus consumed prompts.
    pub queries_used: usize,
    pub scorer_calls: usize,
    /// Transport attempts including retries, generator and scorer separately.
    pub generator_attempts: u32,
    pub scorer_attempts: u32,
    pub shuffle_seed: u64,
    pub prompt_order: Vec<String>,
    pub trace: Vec<TraceStep>,
}

/// Running state of one episode.
#[derive(Debug, Clone)]
pub struct EvidenceState {
    pub drift: f64,
    pub boundaries: BoundaryPair,
    pub iteration: usize,
    pub pool: Vec<Candidate>,
    pub trace: Vec<TraceStep>,
    reference_score: f64,
    decay_factor: f64,
}

impl EvidenceState {
    /// Seeds the state with two scored baselines.
    pub fn start(baseline_a: Candidate, baseline_b: Candidate, config: &RoutingConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let score_a = required_score(&baseline_a)?;
        let score_b = required_score(&baseline_b)?;
        let drift = init_drift(score_a, score_b)?;
        let boundaries = config.initial_boundaries();
        let trace = vec![TraceStep {
            step_kind: StepKind::InitDrift,
            producer_id: baseline_b.producer_id.clone(),
            score: score_b,
            reference_id: Some(baseline_a.producer_id.clone()),
            reference_score: Some(score_a),
            diffusion_value: 0.0,
            drift_after: drift,
            upper_after: boundaries.upper,
            lower_after: boundaries.lower,
            stopped: false,
        }];
        Ok(Self {
            drift,
            boundaries,
            iteration: 0,
            pool: vec![baseline_a, baseline_b],
            trace,
            reference_score: score_a,
            decay_factor: decay_factor(config.decay)?,
        })
    }

    /// Absorbs one scored prompt candidate: update drift, decay, then test.
    /// Returns true when a boundary was met and the episode must stop.
    pub fn absorb(&mut self, candidate: Candidate) -> Result<bool, EngineError> {
        let score = required_score(&candidate)?;
        let step = diffusion(score, self.reference_score)?;
        self.drift += step;
        self.boundaries = BoundaryPair {
            upper: self.boundaries.upper * self.decay_factor,
            lower: self.boundaries.lower * self.decay_factor,
        };
        self.iteration += 1;
        let stopped = self.crossing() != Crossing::Inside;
        self.trace.push(TraceStep {
            step_kind: StepKind::Diffusion,
            producer_id: candidate.producer_id.clone(),
            score,
            reference_id: None,
            reference_score: None,
            diffusion_value: step,
            drift_after: self.drift,
            upper_after: self.boundaries.upper,
            lower_after: self.boundaries.lower,
            stopped,
        });
        self.pool.push(candidate);
        Ok(stopped)
    }

    pub fn crossing(&self) -> Crossing {
        self.boundaries.classify(self.drift)
    }

    /// Marks the init step as the stopping point (pre-loop check).
    fn stop_at_init(&mut self) {
        if let Some(first) = self.trace.first_mut() {
            first.stopped = true;
        }
    }

    pub fn terminal_case(&self) -> TerminalCase {
        match self.crossing() {
            Crossing::Upper => TerminalCase::UpperHit,
            Crossing::Inside => TerminalCase::Exhausted,
            Crossing::Lower => TerminalCase::LowerHit,
        }
    }

    /// Applies the terminal selection rule to the current pool.
    pub fn select(&self) -> (TerminalCase, &Candidate) {
        let case = self.terminal_case();
        let chosen = match case {
            TerminalCase::LowerHit => &self.pool[0],
            TerminalCase::UpperHit | TerminalCase::Exhausted => argmax(&self.pool),
        };
        (case, chosen)
    }
}

fn required_score(c: &Candidate) -> Result<f64, EngineError> {
    match c.score {
        Some(s) if s.is_finite() => Ok(s),
        Some(s) => Err(EngineError::ScoringFailed {
            producer_id: c.producer_id.clone(),
            cause: ProviderError::NonFiniteScore(s),
        }),
        None => Err(EngineError::ScoringFailed {
            producer_id: c.producer_id.clone(),
            cause: ProviderError::MissingScore,
        }),
    }
}

/// Highest-scored candidate; the earliest one wins ties.
pub fn argmax(pool: &[Candidate]) -> &Candidate {
    let mut best = &pool[0];
    for c in &pool[1..] {
        if c.score_or_neg_inf() > best.score_or_neg_inf() {
            best = c;
        }
    }
    best
}

/// Validated routing engine. Immutable once built; share freely.
#[derive(Debug, Clone)]
pub struct Router {
    config: RoutingConfig,
}

struct Episode<'a> {
    source: &'a SourceItem,
    scorer: &'a dyn Scorer,
    generator_attempts: u32,
    scorer_attempts: u32,
    scorer_calls: usize,
}

impl Episode<'_> {
    fn produce(&mut self, generator: &dyn Generator) -> Result<Candidate, EngineError> {
        let expected = generator.producer_id();
        let fail = |cause| EngineError::GenerationFailed {
            producer_id: expected.to_string(),
            cause,
        };
        let generated = generator.generate(self.source).map_err(fail)?;
        self.generator_attempts += generated.attempts;
        let mut candidate = generated.value;
        if candidate.producer_id != expected {
            return Err(fail(ProviderError::Schema(format!(
                "generator returned producer_id {:?}",
                candidate.producer_id
            ))));
        }
        let scoring_failed = |cause| EngineError::ScoringFailed {
            producer_id: expected.to_string(),
            cause,
        };
        let scored = self.scorer.score(self.source, &candidate).map_err(scoring_failed)?;
        self.scorer_calls += 1;
        self.scorer_attempts += scored.attempts;
        if !scored.value.is_finite() {
            return Err(scoring_failed(ProviderError::NonFiniteScore(scored.value)));
        }
        candidate.score = Some(scored.value);
        Ok(candidate)
    }
}

impl Router {
    pub fn new(config: RoutingConfig) -> Result<Self, EngineError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &RoutingConfig {
        &self.config
    }

    /// Runs one episode, shuffling with the configured seed (or fresh entropy).
    pub fn route(&self, source: &SourceItem, providers: &ProviderSet, scorer: &dyn Scorer) -> Result<Decision, EngineError> {
        self.run(source, providers, scorer, self.config.shuffle_seed)
    }

    /// Runs one episode with an explicit shuffle seed.
    pub fn route_with_seed(
        &self,
        source: &SourceItem,
        providers: &ProviderSet,
        scorer: &dyn Scorer,
        shuffle_seed: u64,
    ) -> Result<Decision, EngineError> {
        self.run(source, providers, scorer, Some(shuffle_seed))
    }

    fn run(
        &self,
        source: &SourceItem,
        providers: &ProviderSet,
        scorer: &dyn Scorer,
        seed: Option<u64>,
    ) -> Result<Decision, EngineError> {
        providers.check_covers(&self.config.prompt_ids)?;
        let (order, shuffle_seed) = shuffle_prompts(&self.config.prompt_ids, seed);
        let mut episode = Episode {
            source,
            scorer,
            generator_attempts: 0,
            scorer_attempts: 0,
            scorer_calls: 0,
        };
        let baseline_a = episode.produce(providers.baseline_a.as_ref())?;
        let baseline_b = episode.produce(providers.baseline_b.as_ref())?;
        let mut state = EvidenceState::start(baseline_a, baseline_b, &self.config)?;

        let skip_loop = self.config.check_initial_drift && state.crossing() != Crossing::Inside;
        if skip_loop {
            state.stop_at_init();
        } else {
            for prompt_id in &order {
                let generator = providers.prompt(prompt_id)?;
                let candidate = episode.produce(generator)?;
                if state.absorb(candidate)? {
                    break;
                }
            }
        }

        let (terminal_case, chosen) = state.select();
        Ok(Decision {
            terminal_case,
            chosen: chosen.clone(),
            queries_used: state.pool.len(),
            scorer_calls: episode.scorer_calls,
            generator_attempts: episode.generator_attempts,
            scorer_attempts: episode.scorer_attempts,
            shuffle_seed,
            prompt_order: order,
            trace: state.trace,
        })
    }

    /// Generates and scores every candidate, then takes the argmax.
    ///
    /// Prompts are generated in the shuffled order for `shuffle_seed` so
    /// ties resolve exactly as they would in `route` with the same seed.
    pub fn select_all(
        &self,
        source: &SourceItem,
        providers: &ProviderSet,
        scorer: &dyn Scorer,
        shuffle_seed: Option<u64>,
    ) -> Result<Decision, EngineError> {
        providers.check_covers(&self.config.prompt_ids)?;
        let (order, shuffle_seed) = shuffle_prompts(&self.config.prompt_ids, shuffle_seed.or(self.config.shuffle_seed));
        let mut episode = Episode {
            source,
            scorer,
            generator_attempts: 0,
            scorer_attempts: 0,
            scorer_calls: 0,
        };
        let baseline_a = episode.produce(providers.baseline_a.as_ref())?;
        let baseline_b = episode.produce(providers.baseline_b.as_ref())?;
        let score_a = required_score(&baseline_a)?;
        let score_b = required_score(&baseline_b)?;
        let drift = init_drift(score_a, score_b)?;
        let mut trace = vec![TraceStep {
            step_kind: StepKind::InitDrift,
            producer_id: baseline_b.producer_id.clone(),
            score: score_b,
            reference_id: Some(baseline_a.producer_id.clone()),
            reference_score: Some(score_a),
            diffusion_value: 0.0,
            drift_after: drift,
            upper_after: f64::INFINITY,
            lower_after: f64::NEG_INFINITY,
            stopped: false,
        }];
        let mut pool = vec![baseline_a, baseline_b];
        let mut running = drift;
        for prompt_id in &order {
            let candidate = episode.produce(providers.prompt(prompt_id)?)?;
            let score = required_score(&candidate)?;
            let step = diffusion(score, score_a)?;
            running += step;
            trace.push(TraceStep {
                step_kind: StepKind::Diffusion,
                producer_id: candidate.producer_id.clone(),
                score,
                reference_id: None,
                reference_score: None,
                diffusion_value: step,
                drift_after: running,
                upper_after: f64::INFINITY,
                lower_after: f64::NEG_INFINITY,
                stopped: false,
            });
            pool.push(candidate);
        }
        Ok(Decision {
            terminal_case: TerminalCase::Exhausted,
            chosen: argmax(&pool).clone(),
            queries_used: pool.len(),
            scorer_calls: episode.scorer_calls,
            generator_attempts: episode.generator_attempts,
            scorer_attempts: episode.scorer_attempts,
            shuffle_seed,
            prompt_order: order,
            trace,
        })
    }
}

/// Scores only the two baselines and keeps the better one (A on ties).
pub fn max_routing(source: &SourceItem, providers: &ProviderSet, scorer: &dyn Scorer) -> Result<Decision, EngineError> {
    let mut episode = Episode {
        source,
        scorer,
        generator_attempts: 0,
        scorer_attempts: 0,
        scorer_calls: 0,
    };
    let baseline_a = episode.produce(providers.baseline_a.as_ref())?;
    let baseline_b = episode.produce(providers.baseline_b.as_ref())?;
    let score_a = required_score(&baseline_a)?;
    let score_b = required_score(&baseline_b)?;
    let drift = init_drift(score_a, score_b)?;
    let trace = vec![TraceStep {
        step_kind: StepKind::InitDrift,
        producer_id: baseline_b.producer_id.clone(),
        score: score_b,
        reference_id: Some(baseline_a.producer_id.clone()),
        reference_score: Some(score_a),
        diffusion_value: 0.0,
        drift_after: drift,
        upper_after: f64::INFINITY,
        lower_after: f64::NEG_INFINITY,
        stopped: false,
    }];
    let chosen = if score_b > score_a { baseline_b } else { baseline_a };
    Ok(Decision {
        terminal_case: TerminalCase::Exhausted,
        chosen,
        queries_used: 2,
        scorer_calls: episode.scorer_calls,
        generator_attempts: episode.generator_attempts,
        scorer_attempts: episode.scorer_attempts,
        shuffle_seed: 0,
        prompt_order: Vec::new(),
        trace,
    })
}

/// Outcome of re-running the decision rule over a recorded trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub terminal_case: TerminalCase,
    pub chosen_producer: String,
    pub queries_used: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("trace is empty")]
    Empty,
    #[error("step {0}: expected exactly one leading init_drift step")]
    Structure(usize),
    #[error("step {step}: recorded {field} {recorded} but replay gives {replayed}")]
    Mismatch {
        step: usize,
        field: &'static str,
        recorded: f64,
        replayed: f64,
    },
    #[error("step {0}: stopped flag disagrees with boundary test")]
    StopFlag(usize),
}

/// Recomputes drift, boundaries, stopping and the selection from a trace.
pub fn replay(trace: &[TraceStep], config: &RoutingConfig) -> Result<Replay, ReplayError> {
    let init = trace.first().ok_or(ReplayError::Empty)?;
    if init.step_kind != StepKind::InitDrift {
        return Err(ReplayError::Structure(0));
    }
    let (Some(reference_id), Some(reference_score)) = (init.reference_id.clone(), init.reference_score) else {
        return Err(ReplayError::Structure(0));
    };
    let factor = (-config.decay).exp();
    let mut drift = init.score - reference_score;
    let mut bounds = config.initial_boundaries();
    check(0, "drift_after", init.drift_after, drift)?;
    check(0, "upper_after", init.upper_after, bounds.upper)?;
    check(0, "lower_after", init.lower_after, bounds.lower)?;

    let mut pool: Vec<Candidate> = vec![
        Candidate::new(reference_id, "").with_score(reference_score),
        Candidate::new(init.producer_id.clone(), "").with_score(init.score),
    ];
    for (i, step) in trace.iter().enumerate().skip(1) {
        if step.step_kind != StepKind::Diffusion {
            return Err(ReplayError::Structure(i));
        }
        let value = step.score - reference_score;
        check(i, "diffusion_value", step.diffusion_value, value)?;
        drift += value;
        bounds = BoundaryPair {
            upper: bounds.upper * factor,
            lower: bounds.lower * factor,
        };
        check(i, "drift_after", step.drift_after, drift)?;
        check(i, "upper_after", step.upper_after, bounds.upper)?;
        check(i, "lower_after", step.lower_after, bounds.lower)?;
        let crossed = bounds.classify(drift) != Crossing::Inside;
        if crossed != step.stopped || (crossed && i + 1 != trace.len()) {
            return Err(ReplayError::StopFlag(i));
        }
        pool.push(Candidate::new(step.producer_id.clone(), "").with_score(step.score));
    }
    let case = match bounds.classify(drift) {
        Crossing::Upper => TerminalCase::UpperHit,
        Crossing::Inside => TerminalCase::Exhausted,
        Crossing::Lower => TerminalCase::LowerHit,
    };
    let chosen = match case {
        TerminalCase::LowerHit => &pool[0],
        _ => argmax(&pool),
    };
    Ok(Replay {
        terminal_case: case,
        chosen_producer: chosen.producer_id.clone(),
        queries_used: pool.len(),
    })
}

fn check(step: usize, field: &'static str, recorded: f64, replayed: f64) -> Result<(), ReplayError> {
    if recorded.to_bits() == replayed.to_bits() {
        Ok(())
    } else {
        Err(ReplayError::Mismatch {
            step,
            field,
            recorded,
            replayed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::testing::fixed_providers;
    use crate::providers::PassthroughScorer as FixedScorer;

    fn ids(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn init_drift_examples() {
        assert!((init_drift(0.8532, 0.8527).unwrap() - (-0.0005)).abs() < 1e-12);
        assert_eq!(init_drift(0.7, 0.7).unwrap(), 0.0);
        assert!((init_drift(0.80, 0.84).unwrap() - 0.04).abs() < 1e-12);
        assert!(matches!(init_drift(f64::NAN, 0.1), Err(EngineError::InvalidScore(_))));
        assert!(matches!(init_drift(0.1, f64::INFINITY), Err(EngineError::InvalidScore(_))));
    }

    #[test]
    fn diffusion_examples() {
        assert!((diffusion(0.86, 0.80).unwrap() - 0.06).abs() < 1e-12);
        assert_eq!(diffusion(0.80, 0.80).unwrap(), 0.0);
        assert!((diffusion(0.75, 0.80).unwrap() - (-0.05)).abs() < 1e-12);
        assert!(diffusion(f64::NEG_INFINITY, 0.8).is_err());
    }

    #[test]
    fn decay_examples() {
        let b = BoundaryPair::symmetric(0.05).unwrap();
        let once = decay_boundaries(b, 0.2).unwrap();
        assert!((once.upper - 0.040937).abs() < 1e-6);
        assert!((once.lower + 0.040937).abs() < 1e-6);
        assert_eq!(decay_boundaries(b, 0.0).unwrap(), b);
        let twice = decay_boundaries(once, 0.2).unwrap();
        assert!((twice.upper - 0.033516).abs() < 1e-6);
        assert!((twice.lower + 0.033516).abs() < 1e-6);
        assert!(matches!(decay_boundaries(b, -0.1), Err(EngineError::InvalidConfig(_))));
    }

    #[test]
    fn boundary_pair_validation() {
        assert!(BoundaryPair::new(0.05, -0.05).is_ok());
        assert!(BoundaryPair::new(0.0, -0.05).is_err());
        assert!(BoundaryPair::new(0.05, 0.01).is_err());
        assert!(BoundaryPair::new(f64::NAN, -0.05).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = RoutingConfig::with_prompts(["a", "b"]);
        assert!(cfg.validate().is_ok());
        cfg.prompt_ids.push("a".into());
        assert!(cfg.validate().is_err());
        let cfg = RoutingConfig { decay: -0.1, ..RoutingConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = RoutingConfig { initial_lower: 0.01, ..RoutingConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn singleton_shuffle() {
        let (order, _) = shuffle_prompts(&["p1".to_string()], Some(99));
        assert_eq!(order, vec!["p1".to_string()]);
    }

    #[test]
    fn shuffle_is_deterministic_and_a_permutation() {
        let ids = ids(7);
        let (a, sa) = shuffle_prompts(&ids, Some(42));
        let (b, _) = shuffle_prompts(&ids, Some(42));
        assert_eq!(a, b);
        assert_eq!(sa, 42);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, ids);
    }

    #[test]
    fn unseeded_shuffle_reports_its_seed() {
        let ids = ids(7);
        let (a, seed) = shuffle_prompts(&ids, None);
        let (b, _) = shuffle_prompts(&ids, Some(seed));
        assert_eq!(a, b);
    }

    #[test]
    fn shuffle_first_position_is_uniform() {
        let ids = ids(7);
        let mut counts = [0usize; 7];
        for seed in 0..10_000u64 {
            let (order, _) = shuffle_prompts(&ids, Some(seed));
            let k: usize = order[0][1..].parse().unwrap();
            counts[k - 1] += 1;
        }
        for c in counts {
            let freq = c as f64 / 10_000.0;
            assert!((freq - 1.0 / 7.0).abs() <= 0.02, "freq {freq}");
        }
    }

    #[test]
    fn upper_hit_after_one_prompt() {
        let prompts = ids(7);
        let providers = fixed_providers(0.80, 0.84, &prompts.iter().map(|p| (p.as_str(), 0.86)).collect::<Vec<_>>());
        let router = Router::new(RoutingConfig::with_prompts(prompts.clone())).unwrap();
        let d = router
            .route_with_seed(&SourceItem::new("s", "x"), &providers, &FixedScorer, 5)
            .unwrap();
        assert_eq!(d.terminal_case, TerminalCase::UpperHit);
        assert_eq!(d.queries_used, 3);
        assert_eq!(d.chosen.score, Some(0.86));
        assert_eq!(d.trace.len(), 2);
        assert!((d.trace[1].drift_after - 0.10).abs() < 1e-9);
        assert!((d.trace[1].upper_after - 0.040937).abs() < 1e-6);
        assert!(d.trace[1].stopped);
    }

    #[test]
    fn zero_prompts_uses_initial_boundaries() {
        let router = Router::new(RoutingConfig::default()).unwrap();
        let src = SourceItem::new("s", "x");
        let inside = fixed_providers(0.80, 0.82, &[]);
        let d = router.route_with_seed(&src, &inside, &FixedScorer, 0).unwrap();
        assert_eq!(d.terminal_case, TerminalCase::Exhausted);
        assert_eq!(d.chosen.producer_id, "baseline_b");
        assert_eq!(d.queries_used, 2);

        let low = fixed_providers(0.90, 0.80, &[]);
        let d = router.route_with_seed(&src, &low, &FixedScorer, 0).unwrap();
        assert_eq!(d.terminal_case, TerminalCase::LowerHit);
        assert_eq!(d.chosen.producer_id, "baseline_a");

        let high = fixed_providers(0.80, 0.90, &[]);
        let d = router.route_with_seed(&src, &high, &FixedScorer, 0).unwrap();
        assert_eq!(d.terminal_case, TerminalCase::UpperHit);
        assert_eq!(d.chosen.producer_id, "baseline_b");
    }

    #[test]
    fn initial_drift_is_not_checked_by_default() {
        let prompts = ids(3);
        let providers = fixed_providers(0.80, 0.90, &prompts.iter().map(|p| (p.as_str(), 0.70)).collect::<Vec<_>>());
        let src = SourceItem::new("s", "x");
        let literal = Router::new(RoutingConfig::with_prompts(prompts.clone())).unwrap();
        let d = literal.route_with_seed(&src, &providers, &FixedScorer, 1).unwrap();
        // 0.10 - 0.10 = 0 inside, then -0.10 <= lower.
        assert_eq!(d.queries_used, 4);
        assert_eq!(d.terminal_case, TerminalCase::LowerHit);

        let eager = Router::new(RoutingConfig {
            check_initial_drift: true,
            ..RoutingConfig::with_prompts(prompts)
        })
        .unwrap();
        let d = eager.route_with_seed(&src, &providers, &FixedScorer, 1).unwrap();
        assert_eq!(d.queries_used, 2);
        assert_eq!(d.terminal_case, TerminalCase::UpperHit);
        assert_eq!(d.chosen.producer_id, "baseline_b");
        assert!(d.trace[0].stopped);
    }

    #[test]
    fn missing_prompt_generator_is_invalid_config() {
        let providers = fixed_providers(0.8, 0.8, &[("p1", 0.8)]);
        let router = Router::new(RoutingConfig::with_prompts(["p1", "p2"])).unwrap();
        let err = router
            .route_with_seed(&SourceItem::new("s", "x"), &providers, &FixedScorer, 0)
            .unwrap_err();
        assert!(matches!(err, EngineError::InvalidConfig(_)));
    }

    #[test]
    fn non_finite_score_is_scoring_failure() {
        let providers = fixed_providers(0.8, f64::NAN, &[]);
        let router = Router::new(RoutingConfig::default()).unwrap();
        let err = router
            .route_with_seed(&SourceItem::new("s", "x"), &providers, &FixedScorer, 0)
            .unwrap_err();
        match err {
            EngineError::ScoringFailed { producer_id, .. } => assert_eq!(producer_id, "baseline_b"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn max_routing_examples() {
        let src = SourceItem::new("s", "x");
        let d = max_routing(&src, &fixed_providers(0.8532, 0.8527, &[]), &FixedScorer).unwrap();
        assert_eq!(d.chosen.producer_id, "baseline_a");
        let d = max_routing(&src, &fixed_providers(0.8, 0.8, &[]), &FixedScorer).unwrap();
        assert_eq!(d.chosen.producer_id, "baseline_a");
        let d = max_routing(&src, &fixed_providers(0.80, 0.84, &[]), &FixedScorer).unwrap();
        assert_eq!(d.chosen.producer_id, "baseline_b");
        assert_eq!(d.queries_used, 2);
    }

    #[test]
    fn select_all_counts_every_candidate() {
        let prompts = ids(7);
        let providers = fixed_providers(0.95, 0.8, &prompts.iter().map(|p| (p.as_str(), 0.7)).collect::<Vec<_>>());
        let router = Router::new(RoutingConfig::with_prompts(prompts)).unwrap();
        let d = router
            .select_all(&SourceItem::new("s", "x"), &providers, &FixedScorer, Some(3))
            .unwrap();
        assert_eq!(d.queries_used, 9);
        assert_eq!(d.scorer_calls, 9);
        assert_eq!(d.terminal_case, TerminalCase::Exhausted);
        assert_eq!(d.chosen.producer_id, "baseline_a");
    }

    #[test]
    fn replay_detects_tampering() {
        let prompts = ids(7);
        let providers = fixed_providers(0.5, 0.5, &prompts.iter().map(|p| (p.as_str(), 0.5)).collect::<Vec<_>>());
        let cfg = RoutingConfig::with_prompts(prompts);
        let router = Router::new(cfg.clone()).unwrap();
        let d = router
            .route_with_seed(&SourceItem::new("s", "x"), &providers, &FixedScorer, 11)
            .unwrap();
        let r = replay(&d.trace, &cfg).unwrap();
        assert_eq!(r.terminal_case, TerminalCase::Exhausted);
        assert_eq!(r.chosen_producer, "baseline_a");
        assert_eq!(r.queries_used, 9);

        let mut bad = d.trace.clone();
        bad[3].drift_after += 1e-9;
        assert!(matches!(replay(&bad, &cfg), Err(ReplayError::Mismatch { step: 3, .. })));
        assert_eq!(replay(&[], &cfg), Err(ReplayError::Empty));
    }
}
