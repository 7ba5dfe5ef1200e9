//! `prepare`: behavior label CSV -> train/test COO tensors + distribution.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use coact_core::SplitSpec;
use coact_core::{behavior_to_matrix, class_distribution, read_label_csv, sample_zeros, split};

use crate::config::{prefixed, write_output, FileConfig, ResolvedConfig};
use crate::error::{required, CliError};

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Behavior label CSV with header `second,label` or `trial,second,label`
    #[arg(long, value_name = "PATH")]
    pub labels: Option<PathBuf>,
    /// Output prefix for .train.coo, .test.coo, .dist.txt, .config.resolved
    #[arg(long, value_name = "PREFIX")]
    pub out: Option<PathBuf>,
    /// Sampled zero entries per observed one entry [default: 9]
    #[arg(long, value_name = "RATIO")]
    pub ratio: Option<f64>,
    /// Fraction of entries kept for training [default: 0.9]
    #[arg(long, value_name = "FRACTION")]
    pub train_fraction: Option<f64>,
    /// Seed for zero sampling; the split uses seed+1 [default: 0]
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Trial id assigned when the CSV has no trial column [default: trial-0]
    #[arg(long, value_name = "ID")]
    pub trial: Option<String>,
}

struct Resolved {
    labels: PathBuf,
    out: PathBuf,
    ratio: f64,
    train_fraction: f64,
    seed: u64,
    trial: String,
}

fn resolve(args: &PrepareArgs, file: &FileConfig) -> Result<Resolved, CliError> {
    let mut section = file.section("prepare");
    let labels = args.labels.clone().or(section.take("labels")?);
    let out = args.out.clone().or(section.take("out")?);
    let ratio = args.ratio.or(section.take("ratio")?).unwrap_or(9.0);
    let train_fraction = args
        .train_fraction
        .or(section.take("train-fraction")?)
        .unwrap_or(0.9);
    let seed = args.seed.or(section.take("seed")?).unwrap_or(0);
    let trial = args
        .trial
        .clone()
        .or(section.take_string("trial")?)
        .unwrap_or_else(|| "trial-0".to_string());
    section.finish()?;

    if !(ratio >= 0.0 && ratio.is_finite()) {
        return Err(CliError::Usage(format!(
            "ratio must be nonnegative and finite, got {ratio}"
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CliError::Usage(format!(
            "train-fraction must be strictly between 0 and 1, got {train_fraction}"
        )));
    }
    Ok(Resolved {
        labels: required(labels, "labels")?,
        out: required(out, "out")?,
        ratio,
        train_fraction,
        seed,
        trial,
    })
}

pub fn run(args: &PrepareArgs, file: &FileConfig) -> Result<(), CliError> {
    let cfg = resolve(args, file)?;
    ResolvedConfig::new("prepare")
        .push("labels", cfg.labels.display())
        .push("out", cfg.out.display())
        .push("ratio", cfg.ratio)
        .push("train-fraction", cfg.train_fraction)
        .push("seed", cfg.seed)
        .push("trial", &cfg.trial)
        .write_for(&cfg.out)?;

    let reader = super::open_input(&cfg.labels)?;
    let corpus =
        read_label_csv(reader, &cfg.trial).map_err(|e| CliError::in_file(&cfg.labels, e))?;

    let matrix = behavior_to_matrix(&corpus)?;
    let sampled = sample_zeros(&matrix, cfg.ratio, cfg.seed)?;
    let spec = SplitSpec {
        train_fraction: cfg.train_fraction,
        seed: cfg.seed + 1,
    };
    let (train, test) = split(&sampled, &spec)?;

    for (suffix, tensor) in [("train.coo", &train), ("test.coo", &test)] {
        let path = prefixed(&cfg.out, suffix);
        let mut buffer = Vec::new();
        tensor
            .write_coo(&mut buffer)
            .map_err(|e| CliError::writing(&path, e))?;
        write_output(
            &path,
            &String::from_utf8(buffer).expect("coo output is ascii"),
        )?;
    }

    let stats = class_distribution(&corpus)?;
    let mut dist = String::from("class count proportion\n");
    let mut total = 0;
    for stat in &stats {
        writeln!(
            dist,
            "{} {} {:.3}%",
            stat.label,
            stat.count,
            stat.proportion * 100.0
        )
        .expect("writing to a string");
        total += stat.count;
    }
    writeln!(dist, "total {total} 100.000%").expect("writing to a string");
    write_output(&prefixed(&cfg.out, "dist.txt"), &dist)?;

    println!("train entries = {}", train.len());
    println!("test entries = {}", test.len());
    Ok(())
}
