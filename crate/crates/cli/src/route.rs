use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thinker_ddm::providers::{build_scorer, BuildContext};
use thinker_ddm::seed::{episode_seed, shuffle_seed_for};
use thinker_ddm::{replay, Decision, EngineError, Router, StepKind, TerminalCase, TraceStep};

use crate::{check_coverage, create_output, io_error, load_config, load_library, load_store, resolve_seed, CliError, Result};

/// One line of `route` output.
#[derive(Debug, Serialize, Deserialize)]
struct RouteRow {
    source_id: String,
    chosen_producer: String,
    chosen_text: String,
    chosen_score: f64,
    terminal_case: TerminalCase,
    queries_used: usize,
    shuffle_seed: u64,
    trace: Vec<TraceStep>,
}

impl RouteRow {
    fn new(source_id: String, d: Decision) -> Self {
        Self {
            source_id,
            chosen_producer: d.chosen.producer_id,
            chosen_text: d.chosen.text,
            chosen_score: d.chosen.score.unwrap_or(f64::NAN),
            terminal_case: d.terminal_case,
            queries_used: d.queries_used,
            shuffle_seed: d.shuffle_seed,
            trace: d.trace,
        }
    }
}

#[derive(Debug, Serialize)]
struct ErrorRow<'a> {
    source_id: &'a str,
    error: String,
}

pub fn route(config: &Path, input: &Path, output: &Path, seed: Option<u64>, workers: usize, lenient: bool) -> Result<()> {
    let cfg = load_config(config)?;
    let store = load_store(input)?;
    if !lenient {
        check_coverage(&cfg, &store)?;
    }
    let store = Arc::new(store);
    let ctx = BuildContext {
        store: Some(store.clone()),
        library: Some(Arc::new(load_library(&cfg)?)),
    };
    let providers = cfg.providers.build(&cfg.routing.prompt_ids, &ctx)?;
    let scorer = build_scorer(&cfg.scorer, &ctx).map_err(|e| CliError::Validation(e.to_string()))?;
    let router = Router::new(cfg.routing.clone())?;
    let base = resolve_seed(seed, cfg.routing.shuffle_seed);

    let records = store.records();
    let work = |(i, record): (usize, &thinker_ddm::providers::OfflineRecord)| -> std::result::Result<Decision, EngineError> {
        let ep = episode_seed(base, i as u64);
        let source = record.source_item().with_seed(ep);
        router.route_with_seed(&source, &providers, scorer.as_ref(), shuffle_seed_for(ep))
    };
    let decisions: Vec<_> = if workers > 1 && providers.concurrent_safe() && scorer.concurrent_safe() {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        pool.install(|| records.par_iter().enumerate().map(work).collect())
    } else {
        records.iter().enumerate().map(work).collect()
    };

    let mut out = create_output(output)?;
    let total = records.len();
    eprint!("routed 0/{total}");
    for (i, (record, decision)) in records.iter().zip(decisions).enumerate() {
        let line = match decision {
            Ok(d) => serde_json::to_string(&RouteRow::new(record.source_id.clone(), d)),
            Err(e) if lenient => serde_json::to_string(&ErrorRow {
                source_id: &record.source_id,
                error: e.to_string(),
            }),
            Err(e) => {
                out.flush().map_err(|e| io_error(output, e))?;
                eprintln!();
                return Err(match CliError::from(e) {
                    CliError::Validation(m) => CliError::Validation(format!("{}: {m}", record.source_id)),
                    CliError::Runtime(m) => CliError::Runtime(format!("{}: {m}", record.source_id)),
                });
            }
        }
        .map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| io_error(output, e))?;
        eprint!("\rrouted {}/{total}", i + 1);
    }
    out.flush().map_err(|e| io_error(output, e))?;
    eprintln!();
    Ok(())
}

fn describe(step: &TraceStep, k: usize) -> String {
    let bounds = format!("[{:+.6}, {:+.6}]", step.lower_after, step.upper_after);
    let stop = if step.stopped { "  stop" } else { "" };
    match step.step_kind {
        StepKind::InitDrift => format!(
            "  init     {} {:.6} vs {} {:.6}  drift {:+.6}  bounds {bounds}{stop}",
            step.producer_id,
            step.score,
            step.reference_id.as_deref().unwrap_or("?"),
            step.reference_score.unwrap_or(f64::NAN),
            step.drift_after,
        ),
        StepKind::Diffusion => format!(
            "  step {k:<3} {} {:.6}  diffusion {:+.6}  drift {:+.6}  bounds {bounds}{stop}",
            step.producer_id, step.score, step.diffusion_value, step.drift_after,
        ),
    }
}

/// Prints each decision step by step and checks that its trace replays to
/// the recorded outcome.
pub fn explain(config: &Path, input: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let file = File::open(input).map_err(|e| CliError::Validation(format!("{}: {e}", input.display())))?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let (mut checked, mut failed) = (0usize, 0usize);
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_error(input, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |e: serde_json::Error| CliError::Validation(format!("{} line {}: {e}", input.display(), i + 1));
        let value: serde_json::Value = serde_json::from_str(&line).map_err(malformed)?;
        if let Some(err) = value.get("error") {
            writeln!(out, "{}: error row: {}", value["source_id"], err).map_err(|e| io_error(input, e))?;
            continue;
        }
        let row: RouteRow = serde_json::from_value(value).map_err(malformed)?;
        checked += 1;
        let mut text = format!("{}\n", row.source_id);
        for (k, step) in row.trace.iter().enumerate() {
            text.push_str(&describe(step, k));
            text.push('\n');
        }
        let (ok, verdict) = match replay(&row.trace, &cfg.routing) {
            Ok(r) if r.chosen_producer == row.chosen_producer
                && r.terminal_case == row.terminal_case
                && r.queries_used == row.queries_used =>
            {
                (true, "replay ok".to_string())
            }
            Ok(r) => (
                false,
                format!(
                    "REPLAY MISMATCH: replay gives {} -> {} after {} queries",
                    r.terminal_case, r.chosen_producer, r.queries_used
                ),
            ),
            Err(e) => (false, format!("REPLAY FAILED: {e}")),
        };
        if !ok {
            failed += 1;
        }
        text.push_str(&format!(
            "  => {} -> {} ({:.6}) after {} queries; {verdict}\n",
            row.terminal_case, row.chosen_producer, row.chosen_score, row.queries_used
        ));
        out.write_all(text.as_bytes()).map_err(|e| io_error(input, e))?;
    }
    if failed > 0 {
        return Err(CliError::Validation(format!("{failed} of {checked} traces do not replay")));
    }
    Ok(())
}
