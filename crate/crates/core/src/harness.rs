//! Paired Monte Carlo comparison of drift-diffusion routing against the
//! Max-Routing and generate-everything baselines.
//!
//! Every method sees the same candidates for an episode: synthetic draws are
//! a pure function of the episode seed and the producer id, so methods only
//! differ in which candidates they ask for.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{max_routing, Decision, EngineError, RoutingConfig, Router, TerminalCase};
use crate::providers::{build_scorer, BuildContext, ProviderSet, ProvidersConfig, Scorer, ScorerSpec, SourceItem};
use crate::seed::{episode_seed, shuffle_seed_for};

pub const METHOD_DDM: &str = "ddm";
pub const METHOD_ALL: &str = "all";
pub const METHOD_MAX_ROUTING: &str = "max_routing";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("episode {index} ({source_id}): {source}")]
    Episode {
        index: usize,
        source_id: String,
        #[source]
        source: EngineError,
    },
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_episodes: usize,
    pub routing: RoutingConfig,
    pub providers: ProvidersConfig,
    #[serde(default)]
    pub scorer: ScorerSpec,
    /// Episode `i` uses `seed::episode_seed(base_seed, i)`.
    pub base_seed: u64,
    #[serde(default)]
    pub sweep: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n_episodes == 0 {
            return Err(HarnessError::InvalidConfig("n_episodes must be >= 1".into()));
        }
        self.routing.validate()?;
        if let Some(sweep) = &self.sweep {
            for (i, d) in sweep.iter().enumerate() {
                if !(d.is_finite() && *d >= 0.0) {
                    return Err(HarnessError::InvalidConfig(format!("sweep decay {d} must be >= 0")));
                }
                if sweep[..i].contains(d) {
                    return Err(HarnessError::InvalidConfig(format!("sweep decay {d} appears twice")));
                }
            }
        }
        Ok(())
    }
}

/// What one method picked in one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub chosen_producer: String,
    pub chosen_score: f64,
    pub terminal_case: TerminalCase,
    pub queries_used: usize,
}

impl From<&Decision> for MethodOutcome {
    fn from(d: &Decision) -> Self {
        Self {
            chosen_producer: d.chosen.producer_id.clone(),
            chosen_score: d.chosen.score.unwrap_or(f64::NAN),
            terminal_case: d.terminal_case,
            queries_used: d.queries_used,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: usize,
    pub source_id: String,
    pub seed: u64,
    pub shuffle_seed: u64,
    pub ddm: MethodOutcome,
    pub all: MethodOutcome,
    pub max_routing: MethodOutcome,
    /// DDM outcomes at each sweep decay, in sweep order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub episodes: usize,
    pub mean_chosen_score: f64,
    pub stderr_chosen_score: f64,
    pub mean_queries: f64,
    pub stderr_queries: f64,
    pub query_saving_rate_vs_all: f64,
    pub terminal_case_histogram: BTreeMap<TerminalCase, usize>,
    pub producer_choice_histogram: BTreeMap<String, usize>,
    pub baseline_b_choices: usize,
    pub non_baseline_a_choices: usize,
}

/// Everything needed to recompute aggregates from episode records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub base_seed: u64,
    pub baseline_a: String,
    pub baseline_b: String,
    pub prompt_count: usize,
    pub decay: f64,
    #[serde(default)]
    pub sweep: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub meta: ReportMeta,
    pub n_episodes: usize,
    pub per_method: IndexMap<String, MethodMetrics>,
    #[serde(default)]
    pub per_decay: Option<IndexMap<String, MethodMetrics>>,
    /// Spearman correlation between decay and non-baseline-A choices;
    /// absent when the sweep has fewer than two points or no variation.
    #[serde(default)]
    pub spearman_decay_vs_non_baseline_a: Option<f64>,
    pub episode_records: Vec<EpisodeRecord>,
}

fn mean_and_stderr(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let xs: Vec<f64> = xs.collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn metrics<'a, I>(outcomes: I, meta: &ReportMeta, all_mean_queries: f64) -> MethodMetrics
where
    I: Iterator<Item = &'a MethodOutcome> + Clone,
{
    let episodes = outcomes.clone().count();
    let (mean_chosen_score, stderr_chosen_score) = mean_and_stderr(outcomes.clone().map(|o| o.chosen_score));
    let (mean_queries, stderr_queries) = mean_and_stderr(outcomes.clone().map(|o| o.queries_used as f64));
    let mut terminal_case_histogram: BTreeMap<TerminalCase, usize> = TerminalCase::ALL.iter().map(|c| (*c, 0)).collect();
    let mut producer_choice_histogram = BTreeMap::new();
    let (mut baseline_b_choices, mut non_baseline_a_choices) = (0, 0);
    for o in outcomes {
        *terminal_case_histogram.entry(o.terminal_case).or_default() += 1;
        *producer_choice_histogram.entry(o.chosen_producer.clone()).or_default() += 1;
        if o.chosen_producer == meta.baseline_b {
            baseline_b_choices += 1;
        }
        if o.chosen_producer != meta.baseline_a {
            non_baseline_a_choices += 1;
        }
    }
    MethodMetrics {
        episodes,
        mean_chosen_score,
        stderr_chosen_score,
        mean_queries,
        stderr_queries,
        query_saving_rate_vs_all: 1.0 - mean_queries / all_mean_queries,
        terminal_case_histogram,
        producer_choice_histogram,
        baseline_b_choices,
        non_baseline_a_choices,
    }
}

pub fn decay_key(decay: f64) -> String {
    format!("{decay}")
}

impl ExperimentReport {
    /// Aggregates episode records; summation runs in record order.
    pub fn from_records(meta: ReportMeta, episode_records: Vec<EpisodeRecord>) -> Self {
        let (all_mean_queries, _) = mean_and_stderr(episode_records.iter().map(|r| r.all.queries_used as f64));
        let mut per_method = IndexMap::new();
        per_method.insert(
            METHOD_DDM.to_string(),
            metrics(episode_records.iter().map(|r| &r.ddm), &meta, all_mean_queries),
        );
        per_method.insert(
            METHOD_ALL.to_string(),
            metrics(episode_records.iter().map(|r| &r.all), &meta, all_mean_queries),
        );
        per_method.insert(
            METHOD_MAX_ROUTING.to_string(),
            metrics(episode_records.iter().map(|r| &r.max_routing), &meta, all_mean_queries),
        );
        let per_decay = meta.sweep.as_ref().map(|sweep| {
            sweep
                .iter()
                .enumerate()
                .map(|(k, d)| {
                    let m = metrics(episode_records.iter().map(move |r| &r.sweep[k]), &meta, all_mean_queries);
                    (decay_key(*d), m)
                })
                .collect::<IndexMap<_, _>>()
        });
        let spearman_decay_vs_non_baseline_a = match (&meta.sweep, &per_decay) {
            (Some(sweep), Some(per)) => {
                let counts: Vec<f64> = per.values().map(|m| m.non_baseline_a_choices as f64).collect();
                spearman(sweep, &counts)
            }
            _ => None,
        };
        Self {
            n_episodes: episode_records.len(),
            meta,
            per_method,
            per_decay,
            spearman_decay_vs_non_baseline_a,
            episode_records,
        }
    }

    /// Recomputes every aggregate from the stored episode records.
    pub fn regenerate(&self) -> Self {
        Self::from_records(self.meta.clone(), self.episode_records.clone())
    }

    pub fn method(&self, name: &str) -> &MethodMetrics {
        &self.per_method[name]
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<(), HarnessError> {
        serde_json::to_writer_pretty(&mut w, self).map_err(std::io::Error::from)?;
        writeln!(w)?;
        Ok(())
    }

    /// One row per (episode, method); sweep rows carry their decay.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), HarnessError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "episode",
            "source_id",
            "seed",
            "method",
            "decay",
            "chosen_producer",
            "chosen_score",
            "terminal_case",
            "queries_used",
        ])?;
        for r in &self.episode_records {
            let mut rows: Vec<(&str, String, &MethodOutcome)> = vec![
                (METHOD_DDM, decay_key(self.meta.decay), &r.ddm),
                (METHOD_ALL, String::new(), &r.all),
                (METHOD_MAX_ROUTING, String::new(), &r.max_routing),
            ];
            if let Some(sweep) = &self.meta.sweep {
                for (d, o) in sweep.iter().zip(&r.sweep) {
                    rows.push(("ddm_sweep", decay_key(*d), o));
                }
            }
            for (method, decay, o) in rows {
                out.write_record([
                    r.index.to_string().as_str(),
                    &r.source_id,
                    &r.seed.to_string(),
                    method,
                    &decay,
                    &o.chosen_producer,
                    &o.chosen_score.to_string(),
                    o.terminal_case.as_str(),
                    &o.queries_used.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Average ranks (1-based), ties share the mean of their positions.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` if undefined (n < 2 or a constant side).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

struct Prepared {
    providers: ProviderSet,
    scorer: Arc<dyn Scorer>,
    router: Router,
    sweep_routers: Vec<Router>,
    episodes: Vec<SourceItem>,
    meta: ReportMeta,
}

fn prepare(cfg: &ExperimentConfig, ctx: &BuildContext) -> Result<Prepared, HarnessError> {
    cfg.validate()?;
    let providers = cfg.providers.build(&cfg.routing.prompt_ids, ctx)?;
    let scorer = build_scorer(&cfg.scorer, ctx).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let router = Router::new(cfg.routing.clone())?;
    let sweep_routers = cfg
        .sweep
        .iter()
        .flatten()
        .map(|&decay| Router::new(RoutingConfig { decay, ..cfg.routing.clone() }))
        .collect::<Result<Vec<_>, _>>()?;
    let episodes: Vec<SourceItem> = match &ctx.store {
        Some(store) => store
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| r.source_item().with_seed(episode_seed(cfg.base_seed, i as u64)))
            .collect(),
        None => (0..cfg.n_episodes)
            .map(|i| {
                SourceItem::new(format!("episode-{i}"), String::new()).with_seed(episode_seed(cfg.base_seed, i as u64))
            })
            .collect(),
    };
    if episodes.is_empty() {
        return Err(HarnessError::InvalidConfig("no episodes to run".into()));
    }
    let meta = ReportMeta {
        base_seed: cfg.base_seed,
        baseline_a: providers.baseline_a.producer_id().to_string(),
        baseline_b: providers.baseline_b.producer_id().to_string(),
        prompt_count: cfg.routing.prompt_ids.len(),
        decay: cfg.routing.decay,
        sweep: cfg.sweep.clone(),
    };
    Ok(Prepared {
        providers,
        scorer,
        router,
        sweep_routers,
        episodes,
        meta,
    })
}

fn run_episode(p: &Prepared, index: usize, source: &SourceItem) -> Result<EpisodeRecord, EngineError> {
    let shuffle_seed = shuffle_seed_for(source.seed);
    let scorer = p.scorer.as_ref();
    let ddm = p.router.route_with_seed(source, &p.providers, scorer, shuffle_seed)?;
    let all = p.router.select_all(source, &p.providers, scorer, Some(shuffle_seed))?;
    let max = max_routing(source, &p.providers, scorer)?;
    let sweep = p
        .sweep_routers
        .iter()
        .map(|r| r.route_with_seed(source, &p.providers, scorer, shuffle_seed).map(|d| MethodOutcome::from(&d)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EpisodeRecord {
        index,
        source_id: source.source_id.clone(),
        seed: source.seed,
        shuffle_seed,
        ddm: MethodOutcome::from(&ddm),
        all: MethodOutcome::from(&all),
        max_routing: MethodOutcome::from(&max),
        sweep,
    })
}

fn run(cfg: &ExperimentConfig, ctx: &BuildContext) -> Result<ExperimentReport, HarnessError> {
    let prepared = prepare(cfg, ctx)?;
    let parallel = cfg.workers > 1 && prepared.providers.concurrent_safe() && prepared.scorer.concurrent_safe();
    let work = |(i, s): (usize, &SourceItem)| run_episode(&prepared, i, s);
    let results: Vec<Result<EpisodeRecord, EngineError>> = if parallel {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        pool.install(|| prepared.episodes.par_iter().enumerate().map(work).collect())
    } else {
        prepared.episodes.iter().enumerate().map(work).collect()
    };
    let mut records = Vec::with_capacity(results.len());
    for (index, r) in results.into_iter().enumerate() {
        records.push(r.map_err(|source| HarnessError::Episode {
            index,
            source_id: prepared.episodes[index].source_id.clone(),
            source,
        })?);
    }
    Ok(ExperimentReport::from_records(prepared.meta, records))
}

/// Runs DDM, ALL and Max-Routing over the same episodes.
///
/// With an offline store in `ctx` the episodes are its records and
/// `n_episodes` is ignored. A configured sweep is ignored here.
pub fn run_experiment(cfg: &ExperimentConfig, ctx: &BuildContext) -> Result<ExperimentReport, HarnessError> {
    let cfg = ExperimentConfig {
        sweep: None,
        ..cfg.clone()
    };
    run(&cfg, ctx)
}

/// Like [`run_experiment`], plus DDM at every decay in `cfg.sweep`.
pub fn run_decay_sweep(cfg: &ExperimentConfig, ctx: &BuildContext) -> Result<ExperimentReport, HarnessError> {
    match &cfg.sweep {
        Some(s) if !s.is_empty() => run(cfg, ctx),
        _ => Err(HarnessError::InvalidConfig("decay sweep needs at least one value".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{GeneratorKind, GeneratorSpec, SyntheticScoreModel};

    fn synthetic(id: &str, model: SyntheticScoreModel) -> GeneratorSpec {
        GeneratorSpec {
            producer_id: id.into(),
            kind: GeneratorKind::Synthetic(model),
        }
    }

    fn point_config(a: f64, b: f64, prompt: f64, n: usize) -> ExperimentConfig {
        let prompt_ids: Vec<String> = (1..=7).map(|i| format!("p{i}")).collect();
        ExperimentConfig {
            n_episodes: n,
            routing: RoutingConfig::with_prompts(prompt_ids),
            providers: ProvidersConfig {
                baseline_a: synthetic("baseline_a", SyntheticScoreModel::point(a)),
                baseline_b: synthetic("baseline_b", SyntheticScoreModel::point(b)),
                prompts: IndexMap::new(),
                prompt_default: Some(GeneratorKind::Synthetic(SyntheticScoreModel::point(prompt))),
            },
            scorer: ScorerSpec::Passthrough,
            base_seed: 7,
            sweep: None,
            workers: 1,
        }
    }

    #[test]
    fn dominant_baseline_stops_after_one_prompt() {
        let report = run_experiment(&point_config(0.9, 0.8, 0.8, 100), &BuildContext::default()).unwrap();
        let ddm = report.method(METHOD_DDM);
        assert_eq!(ddm.terminal_case_histogram[&TerminalCase::LowerHit], 100);
        assert_eq!(ddm.mean_queries, 3.0);
        assert!((ddm.query_saving_rate_vs_all - (1.0 - 3.0 / 9.0)).abs() < 1e-12);
        assert_eq!(report.method(METHOD_ALL).mean_queries, 9.0);
        assert_eq!(report.method(METHOD_MAX_ROUTING).mean_queries, 2.0);
    }

    #[test]
    fn zero_evidence_exhausts() {
        let report = run_experiment(&point_config(0.5, 0.5, 0.5, 20), &BuildContext::default()).unwrap();
        let ddm = report.method(METHOD_DDM);
        assert_eq!(ddm.mean_queries, 9.0);
        assert_eq!(ddm.query_saving_rate_vs_all, 0.0);
        assert_eq!(ddm.terminal_case_histogram[&TerminalCase::Exhausted], 20);
    }

    #[test]
    fn sweep_validation() {
        let mut cfg = point_config(0.9, 0.8, 0.8, 5);
        cfg.sweep = Some(vec![0.1, 0.1]);
        assert!(matches!(
            run_decay_sweep(&cfg, &BuildContext::default()),
            Err(HarnessError::InvalidConfig(_))
        ));
        cfg.sweep = Some(vec![-0.1]);
        assert!(run_decay_sweep(&cfg, &BuildContext::default()).is_err());
        cfg.sweep = None;
        assert!(run_decay_sweep(&cfg, &BuildContext::default()).is_err());
        cfg.sweep = Some(vec![0.1, 0.2, 0.3]);
        let report = run_decay_sweep(&cfg, &BuildContext::default()).unwrap();
        assert_eq!(report.per_decay.as_ref().unwrap().len(), 3);
    }

    #[test]
    fn workers_do_not_change_results() {
        let mut cfg = point_config(0.8, 0.82, 0.82, 200);
        cfg.providers.baseline_a = synthetic("baseline_a", SyntheticScoreModel::gaussian(0.80, 0.02));
        cfg.providers.prompt_default = Some(GeneratorKind::Synthetic(SyntheticScoreModel::gaussian(0.82, 0.03)));
        let seq = run_experiment(&cfg, &BuildContext::default()).unwrap();
        cfg.workers = 4;
        let par = run_experiment(&cfg, &BuildContext::default()).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), None);
        assert_eq!(spearman(&[1.0], &[1.0]), None);
        let r = spearman(&[1.0, 2.0, 3.0], &[2.0, 2.0, 1.0]).unwrap();
        assert!((r + 0.866_025_403_784_438_6).abs() < 1e-12);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}
