use std::io::Write;
use std::sync::Arc;

use thinker_ddm::harness::{run_decay_sweep, run_experiment, METHOD_DDM};
use thinker_ddm::providers::BuildContext;

use crate::{check_coverage, create_output, io_error, load_config, load_library, load_store, resolve_seed, CliError, ExperimentArgs, Result};

/// `simulate` runs the three methods; `sweep` (or `--decay-sweep`) adds the
/// ddm method at each decay of the sweep.
pub fn simulate(args: &ExperimentArgs, sweep: bool) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let csv_path = args.output.with_extension("csv");
    if csv_path == args.output {
        return Err(CliError::Validation("--output must not end in .csv; the CSV is written next to it".into()));
    }
    let store = match &args.input {
        Some(path) => {
            let store = load_store(path)?;
            check_coverage(&cfg, &store)?;
            Some(Arc::new(store))
        }
        None => None,
    };
    let ctx = BuildContext {
        store,
        library: Some(Arc::new(load_library(&cfg)?)),
    };
    let base = resolve_seed(args.seed, cfg.experiment.as_ref().and_then(|e| e.base_seed));
    let exp = cfg
        .experiment_config(base, args.decay_sweep.clone(), args.workers)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let report = if sweep || args.decay_sweep.is_some() {
        run_decay_sweep(&exp, &ctx)?
    } else {
        run_experiment(&exp, &ctx)?
    };

    let mut json = create_output(&args.output)?;
    report.write_json(&mut json)?;
    json.flush().map_err(|e| io_error(&args.output, e))?;
    let mut csv = create_output(&csv_path)?;
    report.write_csv(&mut csv)?;
    csv.flush().map_err(|e| io_error(&csv_path, e))?;

    let ddm = report.method(METHOD_DDM);
    eprintln!(
        "{} episodes, seed {base}: ddm mean queries {:.4}, query saving vs all {:.4}",
        report.n_episodes, ddm.mean_queries, ddm.query_saving_rate_vs_all
    );
    Ok(())
}
