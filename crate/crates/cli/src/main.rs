use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thinker_ddm::config::ProjectConfig;
use thinker_ddm::harness::HarnessError;
use thinker_ddm::providers::offline::{OfflineStore, RecordFileError};
use thinker_ddm::{EngineError, PromptError, PromptLibrary};
use thiserror::Error;

mod experiment;
mod route;

/// Drift-diffusion routing of translation candidates.
#[derive(Parser, Debug)]
#[command(name = "thinker-ddm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Route every record of an offline JSONL file.
    Route {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1, value_parser = positive)]
        workers: usize,
        /// Write an error row for a failing record instead of aborting.
        #[arg(long)]
        lenient: bool,
    },
    /// Compare ddm, all and max_routing over synthetic or offline episodes.
    Simulate(ExperimentArgs),
    /// Like simulate, plus the ddm method at every decay of the sweep.
    Sweep(ExperimentArgs),
    /// Print a rendered prompt template.
    RenderPrompt {
        template_id: String,
        /// Template variables as KEY=VALUE.
        #[arg(value_parser = parse_var)]
        vars: Vec<(String, String)>,
        /// Directory with a manifest.toml; the builtin templates otherwise.
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// Replay the traces of a `route` output file and explain each decision.
    ExplainTrace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(clap::Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Report JSON; the CSV goes next to it with a .csv extension.
    #[arg(long)]
    output: PathBuf,
    /// Offline records to use as episodes instead of synthetic draws.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = positive)]
    workers: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    decay_sweep: Option<Vec<f64>>,
}

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("expected an integer >= 1, got {s:?}")),
    }
}

fn parse_var(s: &str) -> std::result::Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(format!("expected KEY=VALUE, got {s:?}")),
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, input or arguments: exit 1.
    #[error("{0}")]
    Validation(String),
    /// Provider, scorer or I/O failure while running: exit 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidConfig(_) => CliError::Validation(e.to_string()),
            HarnessError::Engine(ref inner) | HarnessError::Episode { source: ref inner, .. }
                if inner.is_validation() =>
            {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

pub fn load_config(path: &Path) -> Result<ProjectConfig> {
    ProjectConfig::load(path).map_err(|e| CliError::Validation(e.to_string()))
}

pub fn load_library(cfg: &ProjectConfig) -> Result<PromptLibrary> {
    match &cfg.templates_dir {
        Some(dir) => Ok(PromptLibrary::load(dir)?),
        None => Ok(PromptLibrary::builtin()),
    }
}

pub fn load_store(path: &Path) -> Result<OfflineStore> {
    let file = File::open(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    OfflineStore::from_jsonl(BufReader::new(file)).map_err(|e| match e {
        RecordFileError::Io(e) => io_error(path, e),
        e => CliError::Validation(format!("{}: {e}", path.display())),
    })
}

/// Fails on the first record lacking a producer the config reads offline.
pub fn check_coverage(cfg: &ProjectConfig, store: &OfflineStore) -> Result<()> {
    let required = cfg
        .providers
        .offline_producers(&cfg.routing.prompt_ids)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    for record in store.records() {
        if let Some(p) = record.missing_producer(&required) {
            return Err(CliError::Validation(format!(
                "record {:?} is missing producer {p:?}",
                record.source_id
            )));
        }
    }
    Ok(())
}

/// Explicit seed, else the configured one, else fresh entropy echoed to stderr.
pub fn resolve_seed(flag: Option<u64>, configured: Option<u64>) -> u64 {
    flag.or(configured).unwrap_or_else(|| {
        let seed = rand::random();
        eprintln!("seed: {seed}");
        seed
    })
}

/// Buffered writer for `path`, creating missing parent directories.
pub fn create_output(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn render_prompt(template_id: &str, vars: Vec<(String, String)>, templates: Option<&Path>) -> Result<()> {
    let library = match templates {
        Some(dir) => PromptLibrary::load(dir)?,
        None => PromptLibrary::builtin(),
    };
    let vars: HashMap<String, String> = vars.into_iter().collect();
    let text = library.render(template_id, &vars)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").map_err(|e| CliError::Runtime(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Route {
            config,
            input,
            output,
            seed,
            workers,
            lenient,
        } => route::route(&config, &input, &output, seed, workers, lenient),
        Command::Simulate(args) => experiment::simulate(&args, false),
        Command::Sweep(args) => experiment::simulate(&args, true),
        Command::RenderPrompt {
            template_id,
            vars,
            templates,
        } => render_prompt(&template_id, vars, templates.as_deref()),
        Command::ExplainTrace { config, input } => route::explain(&config, &input),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
