//! `metrics`: score predicted labels against gold labels.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use coact_core::{evaluate_run, read_label_csv, BehaviorLabel, EvalReport};

use crate::config::{prefixed, write_output, FileConfig, ResolvedConfig};
use crate::error::{required, CliError};

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Gold label CSV with header `second,label` or `trial,second,label`
    #[arg(long, value_name = "PATH")]
    pub gold: Option<PathBuf>,
    /// Predicted label CSV in the same format
    #[arg(long, value_name = "PATH")]
    pub predicted: Option<PathBuf>,
    /// Optional output prefix; writes .metrics.txt and .config.resolved
    #[arg(long, value_name = "PREFIX")]
    pub out: Option<PathBuf>,
}

fn read_labels(path: &Path, default_trial: &str) -> Result<Vec<BehaviorLabel>, CliError> {
    let sequences = read_label_csv(super::open_input(path)?, default_trial)
        .map_err(|e| CliError::in_file(path, e))?;
    Ok(sequences.into_iter().flat_map(|s| s.labels).collect())
}

/// Per-class table with fixed four-decimal cells, then full-precision
/// key-value lines for machine consumption.
fn render(report: &EvalReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<10} {:>9} {:>7} {:>7} {:>7}",
        "class", "precision", "recall", "f1", "f2"
    )
    .expect("writing to a string");
    for class in &report.per_class {
        writeln!(
            out,
            "{:<10} {:>9.4} {:>7.4} {:>7.4} {:>7.4}",
            class.label.to_string(),
            class.precision,
            class.recall,
            class.f1,
            class.f2
        )
        .expect("writing to a string");
    }
    out.push('\n');
    writeln!(out, "macro_f1 = {}", report.macro_f1).expect("writing to a string");
    writeln!(out, "balanced_accuracy = {}", report.balanced_accuracy).expect("writing to a string");
    writeln!(out, "mcc = {}", report.mcc).expect("writing to a string");
    out
}

pub fn run(args: &MetricsArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut section = file.section("metrics");
    let gold = args.gold.clone().or(section.take("gold")?);
    let predicted = args.predicted.clone().or(section.take("predicted")?);
    let out = args.out.clone().or(section.take("out")?);
    section.finish()?;

    let gold = required(gold, "gold")?;
    let predicted = required(predicted, "predicted")?;
    let truth = read_labels(&gold, "gold")?;
    let pred = read_labels(&predicted, "predicted")?;
    let report = evaluate_run(&truth, &pred)?;
    let rendered = render(&report);

    if let Some(out) = &out {
        ResolvedConfig::new("metrics")
            .push("gold", gold.display())
            .push("predicted", predicted.display())
            .push("out", out.display())
            .write_for(out)?;
        write_output(&prefixed(out, "metrics.txt"), &rendered)?;
    }
    print!("{rendered}");
    Ok(())
}
