//! `coact`: prepare data, fit decompositions, evaluate models, run
//! sequenced labeling, and score agreement, from one binary.
//!
//! Every subcommand is deterministic given its inputs and resolved
//! configuration, reads settings from `--config` sections named after the
//! subcommand (flags override the file), never mutates its inputs, and
//! echoes the fully resolved settings next to whatever it writes. Exit
//! codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 runtime or labeler failure.

mod commands;
mod config;
mod error;
mod model_io;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{components, eval, fit, kappa, label, metrics, prepare};
use config::FileConfig;

#[derive(Debug, Parser)]
#[command(
    name = "coact",
    version,
    about = "Coupled tensor decomposition and sequenced labeling runs",
    after_help = "Exit codes: 0 success, 1 usage/config error, 2 data error, \
                  3 runtime/labeler failure."
)]
struct Cli {
    /// Config file with one [section] per subcommand; flags override it
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn a behavior label CSV into train/test COO tensors and a class
    /// distribution report
    Prepare(prepare::PrepareArgs),
    /// Fit a decomposition and write the model, fit report, and factor CSV
    Fit(fit::FitArgs),
    /// Recompute a saved model's RMSE on a COO tensor
    Eval(eval::EvalArgs),
    /// Export per-component weights, contribution scores, and tags as CSV
    Components(components::ComponentsArgs),
    /// Label a chunk manifest with a sequenced labeler and record the trace
    Label(label::LabelArgs),
    /// Score predicted labels against gold labels
    Metrics(metrics::MetricsArgs),
    /// Quadratic-weighted Cohen's kappa from expert/model score pairs
    Kappa(kappa::KappaArgs),
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let file = match cli.config.as_deref().map(FileConfig::load).transpose() {
        Ok(file) => file.unwrap_or_else(FileConfig::empty),
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Prepare(args) => prepare::run(args, &file),
        Command::Fit(args) => fit::run(args, &file),
        Command::Eval(args) => eval::run(args, &file),
        Command::Components(args) => components::run(args, &file),
        Command::Label(args) => label::run(args, &file),
        Command::Metrics(args) => metrics::run(args, &file),
        Command::Kappa(args) => kappa::run(args, &file),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
