//! Command-line driver: configuration, artifact directory, subcommands and
//! the exit-code contract.

mod args;
mod artifacts;
mod commands;
mod config;
mod error;

use std::ffi::OsString;

use clap::Parser;
use echoloop::Execution;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult};

/// Parses arguments, runs the subcommand and returns the process exit code.
/// Failures print a JSON error object on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let mut stage = None;
    let mut completed = Vec::new();
    match execute(&cli, &mut stage, &mut completed) {
        Ok(()) => 0,
        Err(e) => {
            let body = serde_json::json!({
                "error": {
                    "code": e.code(),
                    "message": e.to_string(),
                    "hint": e.hint(),
                    "stage": stage,
                    "completed_stages": completed,
                    "exit_code": e.exit_code(),
                }
            });
            eprintln!("{body}");
            e.exit_code()
        }
    }
}

fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(echoloop::Error::InvalidParameter("ECHOLOOP_THREADS must be at least 1".into()).into());
    }
    #[cfg(feature = "parallel")]
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        log::warn!("thread pool already configured: {e}");
    }
    Ok(())
}

fn execute(cli: &Cli, stage: &mut Option<String>, completed: &mut Vec<String>) -> CliResult<()> {
    configure_threads(cli.threads)?;
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let mut cfg = config::load(cli.config.as_deref())?;
    let (name, overrides) = match &cli.command {
        Command::Ingest(_) => ("ingest", None),
        Command::Split(_) => ("split", None),
        Command::Train(o) => ("train", Some(o)),
        Command::Experiment(a) => ("experiment", Some(&a.overrides)),
        Command::Markov(_) => ("markov", None),
        Command::Satisfy(o) => ("satisfy", Some(o)),
        Command::Recommend(a) => ("recommend", Some(&a.overrides)),
    };
    if let Some(o) = overrides {
        config::apply(&mut cfg, o);
    }
    let mut ws = artifacts::Workspace::open(&cli.artifact_dir)?;
    let result = match &cli.command {
        Command::Ingest(a) => commands::ingest_cmd(&mut ws, &mut cfg, a),
        Command::Split(a) => commands::split_cmd(&mut ws, &mut cfg, a),
        Command::Train(_) => commands::train_cmd(&mut ws, &cfg),
        Command::Experiment(a) => commands::experiment_cmd(&mut ws, &mut cfg, a, exec),
        Command::Markov(a) => commands::markov_cmd(&mut ws, &cfg, a, exec).map(|spec| cfg.markov = spec),
        Command::Satisfy(_) => commands::satisfy_cmd(&mut ws, &cfg, exec),
        Command::Recommend(a) => commands::recommend_cmd(&mut ws, &cfg, a),
    };
    if let Err(e) = result {
        *stage = ws.failed_stage().map(str::to_string);
        *completed = ws.completed_stages();
        return Err(e);
    }
    if matches!(cli.command, Command::Recommend(_)) {
        return Ok(());
    }
    let hash = config::hash(&cfg)?;
    ws.finish(name, &hash, &config::seeds(&cfg))
}
