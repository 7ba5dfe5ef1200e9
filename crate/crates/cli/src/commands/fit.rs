//! `fit`: COO tensors -> serialized model + fit report + factor CSV.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use coact_core::{
    fit_coupled_cp, fit_coupled_neat, fit_cp, fit_neat, FitReport, Matrix, NonnegMap, TensorSlot,
    TrainConfig,
};

use crate::config::{prefixed, write_output, FileConfig, ResolvedConfig};
use crate::error::{required, CliError};
use crate::model_io::{self, ModelKind};

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Model family: cpd, coupled-cpd, neat, or coupled-neat
    #[arg(long, value_name = "KIND")]
    pub model: Option<String>,
    /// Primary (X) tensor in COO text format
    #[arg(long, value_name = "PATH")]
    pub x: Option<PathBuf>,
    /// Second (Y) tensor; coupled models only
    #[arg(long, value_name = "PATH")]
    pub y: Option<PathBuf>,
    /// Output prefix for .model.json, .report.json, .factors.csv
    #[arg(long, value_name = "PREFIX")]
    pub out: Option<PathBuf>,
    /// Number of components
    #[arg(long, value_name = "R")]
    pub rank: Option<usize>,
    /// Adam step size [default: 0.01]
    #[arg(long, value_name = "LR")]
    pub learning_rate: Option<f64>,
    /// Maximum number of epochs [default: 500]
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    /// Entries per mini-batch [default: 1024]
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Seed for initialization and shuffling [default: 0]
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Weight of Y residuals in the coupled loss; coupled models only [default: 1]
    #[arg(long, value_name = "W")]
    pub coupling_weight: Option<f64>,
    /// Epochs without improvement before early stop [default: 10]
    #[arg(long, value_name = "N")]
    pub patience: Option<usize>,
    /// Minimum RMSE improvement that counts as progress [default: 1e-6]
    #[arg(long, value_name = "D")]
    pub delta: Option<f64>,
    /// Nonnegativity map: softplus or relu [default: softplus]
    #[arg(long, value_name = "MAP")]
    pub map: Option<String>,
    /// Comma-separated hidden widths of neat heads; neat models only
    /// [default: empty, meaning affine heads]
    #[arg(long, value_name = "W,W,...")]
    pub head_hidden: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitKind {
    Cpd,
    CoupledCpd,
    Neat,
    CoupledNeat,
}

impl FitKind {
    fn is_coupled(self) -> bool {
        matches!(self, FitKind::CoupledCpd | FitKind::CoupledNeat)
    }

    fn is_neat(self) -> bool {
        matches!(self, FitKind::Neat | FitKind::CoupledNeat)
    }

    fn name(self) -> &'static str {
        match self {
            FitKind::Cpd => "cpd",
            FitKind::CoupledCpd => "coupled-cpd",
            FitKind::Neat => "neat",
            FitKind::CoupledNeat => "coupled-neat",
        }
    }
}

impl FromStr for FitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cpd" => Ok(FitKind::Cpd),
            "coupled-cpd" => Ok(FitKind::CoupledCpd),
            "neat" => Ok(FitKind::Neat),
            "coupled-neat" => Ok(FitKind::CoupledNeat),
            other => Err(format!(
                "unknown model `{other}` (expected cpd, coupled-cpd, neat, or coupled-neat)"
            )),
        }
    }
}

fn parse_widths(s: &str) -> Result<Vec<usize>, CliError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("invalid head-hidden width `{}`", w.trim())))
        })
        .collect()
}

struct Resolved {
    kind: FitKind,
    x: PathBuf,
    y: Option<PathBuf>,
    out: PathBuf,
    train: TrainConfig,
}

fn resolve(args: &FitArgs, file: &FileConfig) -> Result<Resolved, CliError> {
    let mut section = file.section("fit");
    let model = args.model.clone().or(section.take_string("model")?);
    let x = args.x.clone().or(section.take("x")?);
    let y = args.y.clone().or(section.take("y")?);
    let out = args.out.clone().or(section.take("out")?);
    let rank = args.rank.or(section.take("rank")?);
    let learning_rate = args.learning_rate.or(section.take("learning-rate")?);
    let epochs = args.epochs.or(section.take("epochs")?);
    let batch_size = args.batch_size.or(section.take("batch-size")?);
    let seed = args.seed.or(section.take("seed")?);
    let coupling_weight = args.coupling_weight.or(section.take("coupling-weight")?);
    let patience = args.patience.or(section.take("patience")?);
    let delta = args.delta.or(section.take("delta")?);
    let map = args.map.clone().or(section.take_string("map")?);
    let head_hidden = args
        .head_hidden
        .clone()
        .or(section.take_string("head-hidden")?);
    section.finish()?;

    let kind: FitKind = required(model, "model")?.parse().map_err(CliError::Usage)?;
    if !kind.is_coupled() {
        if y.is_some() {
            return Err(CliError::Usage(format!(
                "--y only applies to coupled models, not {}",
                kind.name()
            )));
        }
        if coupling_weight.is_some() {
            return Err(CliError::Usage(format!(
                "--coupling-weight only applies to coupled models, not {}",
                kind.name()
            )));
        }
    }
    if !kind.is_neat() && head_hidden.is_some() {
        return Err(CliError::Usage(format!(
            "--head-hidden only applies to neat models, not {}",
            kind.name()
        )));
    }
    let y = if kind.is_coupled() {
        Some(required(y, "y")?)
    } else {
        None
    };
    let map: NonnegMap = map
        .as_deref()
        .unwrap_or("softplus")
        .parse()
        .map_err(CliError::Usage)?;

    let mut train = TrainConfig::new(required(rank, "rank")?, seed.unwrap_or(0));
    if let Some(lr) = learning_rate {
        train.learning_rate = lr;
    }
    if let Some(e) = epochs {
        train.epochs = e;
    }
    if let Some(b) = batch_size {
        train.batch_size = b;
    }
    if let Some(w) = coupling_weight {
        train.coupling_weight = w;
    }
    if let Some(p) = patience {
        train.early_stop_patience = p;
    }
    if let Some(d) = delta {
        train.early_stop_delta = d;
    }
    train.nonneg_map = map;
    train.head_hidden = parse_widths(head_hidden.as_deref().unwrap_or(""))?;

    Ok(Resolved {
        kind,
        x: required(x, "x")?,
        y,
        out: required(out, "out")?,
        train,
    })
}

fn echo(cfg: &Resolved) -> ResolvedConfig {
    let mut echo = ResolvedConfig::new("fit");
    echo.push("model", cfg.kind.name())
        .push("x", cfg.x.display());
    if let Some(y) = &cfg.y {
        echo.push("y", y.display());
    }
    echo.push("out", cfg.out.display())
        .push("rank", cfg.train.rank)
        .push("learning-rate", cfg.train.learning_rate)
        .push("epochs", cfg.train.epochs)
        .push("batch-size", cfg.train.batch_size)
        .push("seed", cfg.train.seed);
    if cfg.kind.is_coupled() {
        echo.push("coupling-weight", cfg.train.coupling_weight);
    }
    echo.push("patience", cfg.train.early_stop_patience)
        .push("delta", cfg.train.early_stop_delta)
        .push("map", format!("{:?}", cfg.train.nonneg_map).to_lowercase());
    if cfg.kind.is_neat() {
        let widths: Vec<String> = cfg
            .train
            .head_hidden
            .iter()
            .map(|w| w.to_string())
            .collect();
        echo.push("head-hidden", widths.join(","));
    }
    echo
}

/// Factor CSV rows: every factor matrix after the nonnegativity map.
fn factors_csv(model: &ModelKind) -> String {
    let mut csv = String::from("mode,row,component,value\n");
    let mut block = |name: &str, factor: &Matrix| {
        for row in 0..factor.rows() {
            for component in 0..factor.cols() {
                writeln!(
                    csv,
                    "{name},{row},{component},{}",
                    factor.get(row, component)
                )
                .expect("writing to a string");
            }
        }
    };
    match model {
        ModelKind::Cpd(m) => {
            for mode in 0..m.n_modes() {
                block(&format!("mode{mode}"), &m.factor(mode));
            }
        }
        ModelKind::Neat(m) => {
            for mode in 0..m.shape().len() {
                block(&format!("mode{mode}"), &m.factor(mode));
            }
        }
        ModelKind::CoupledCpd(m) => {
            let phi = m.nonneg_map();
            block("trial", &m.trial_factor().map(|v| phi.apply(v)));
            block("time", &m.time_factor().map(|v| phi.apply(v)));
            if let Some(f) = m.mode3_factor(TensorSlot::X) {
                block("x-mode3", &f.map(|v| phi.apply(v)));
            }
            if let Some(f) = m.mode3_factor(TensorSlot::Y) {
                block("y-mode3", &f.map(|v| phi.apply(v)));
            }
        }
        ModelKind::CoupledNeat(m) => {
            let phi = m.nonneg_map();
            block("trial", &m.trial_factor().map(|v| phi.apply(v)));
            block("time", &m.time_factor().map(|v| phi.apply(v)));
            if let Some(f) = m.mode3_factor(TensorSlot::X) {
                block("x-mode3", &f.map(|v| phi.apply(v)));
            }
            if let Some(f) = m.mode3_factor(TensorSlot::Y) {
                block("y-mode3", &f.map(|v| phi.apply(v)));
            }
        }
    }
    csv
}

pub fn run(args: &FitArgs, file: &FileConfig) -> Result<(), CliError> {
    let cfg = resolve(args, file)?;
    echo(&cfg).write_for(&cfg.out)?;

    let x = super::read_tensor(&cfg.x)?;
    let y = cfg.y.as_deref().map(super::read_tensor).transpose()?;

    let (model, report): (ModelKind, FitReport) = match cfg.kind {
        FitKind::Cpd => {
            let (m, r) = fit_cp(&x, &cfg.train)?;
            (ModelKind::Cpd(m), r)
        }
        FitKind::CoupledCpd => {
            let (m, r) = fit_coupled_cp(&x, y.as_ref().expect("resolved"), &cfg.train)?;
            (ModelKind::CoupledCpd(m), r)
        }
        FitKind::Neat => {
            let (m, r) = fit_neat(&x, &cfg.train)?;
            (ModelKind::Neat(m), r)
        }
        FitKind::CoupledNeat => {
            let (m, r) = fit_coupled_neat(&x, y.as_ref().expect("resolved"), &cfg.train)?;
            (ModelKind::CoupledNeat(m), r)
        }
    };

    model_io::save(&prefixed(&cfg.out, "model.json"), &model)?;
    let report_json = serde_json::to_string(&report)
        .map_err(|e| CliError::Runtime(format!("could not encode report: {e}")))?;
    write_output(
        &prefixed(&cfg.out, "report.json"),
        &format!("{report_json}\n"),
    )?;
    write_output(&prefixed(&cfg.out, "factors.csv"), &factors_csv(&model))?;

    println!("final_train_rmse = {}", report.final_train_rmse);
    println!("epochs_run = {}", report.epochs_run);
    println!("stopped_early = {}", report.stopped_early);
    Ok(())
}
