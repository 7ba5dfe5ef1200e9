//! `kappa`: quadratic-weighted Cohen's kappa from score pairs.

use std::path::PathBuf;

use clap::Args;
use coact_core::{quadratic_weighted_kappa, read_score_pairs_csv};

use crate::config::{prefixed, write_output, FileConfig, ResolvedConfig};
use crate::error::{required, CliError};

#[derive(Debug, Args)]
pub struct KappaArgs {
    /// Score pair CSV with header `expert,model`; scores are 1..5
    #[arg(long, value_name = "PATH")]
    pub pairs: Option<PathBuf>,
    /// Optional output prefix; writes .kappa.txt and .config.resolved
    #[arg(long, value_name = "PREFIX")]
    pub out: Option<PathBuf>,
}

pub fn run(args: &KappaArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut section = file.section("kappa");
    let pairs_path = args.pairs.clone().or(section.take("pairs")?);
    let out = args.out.clone().or(section.take("out")?);
    section.finish()?;

    let pairs_path = required(pairs_path, "pairs")?;
    let pairs = read_score_pairs_csv(super::open_input(&pairs_path)?)
        .map_err(|e| CliError::in_file(&pairs_path, e))?;
    let kappa = quadratic_weighted_kappa(&pairs)?;
    let summary = format!("pairs = {}\nkappa = {kappa}\n", pairs.len());

    if let Some(out) = &out {
        ResolvedConfig::new("kappa")
            .push("pairs", pairs_path.display())
            .push("out", out.display())
            .write_for(out)?;
        write_output(&prefixed(out, "kappa.txt"), &summary)?;
    }
    print!("{summary}");
    Ok(())
}
