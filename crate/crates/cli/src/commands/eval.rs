//! `eval`: recompute a saved model's RMSE on a COO tensor.

use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use coact_core::{rmse, TensorSlot};

use crate::config::{prefixed, write_output, FileConfig, ResolvedConfig};
use crate::error::{required, CliError};
use crate::model_io::{self, ModelKind};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file written by `fit`
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Tensor to score, in COO text format
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Which tensor of a coupled model the data holds: x or y [default: x]
    #[arg(long, value_name = "SLOT")]
    pub slot: Option<String>,
    /// Optional output prefix; writes .eval.txt and .config.resolved
    #[arg(long, value_name = "PREFIX")]
    pub out: Option<PathBuf>,
}

struct Slot(TensorSlot);

impl FromStr for Slot {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(Slot(TensorSlot::X)),
            "y" => Ok(Slot(TensorSlot::Y)),
            other => Err(format!("unknown slot `{other}` (expected x or y)")),
        }
    }
}

fn slot_name(slot: TensorSlot) -> &'static str {
    match slot {
        TensorSlot::X => "x",
        TensorSlot::Y => "y",
    }
}

pub fn run(args: &EvalArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut section = file.section("eval");
    let model_path = args.model.clone().or(section.take("model")?);
    let data_path = args.data.clone().or(section.take("data")?);
    let slot = args.slot.clone().or(section.take_string("slot")?);
    let out = args.out.clone().or(section.take("out")?);
    section.finish()?;

    let model_path = required(model_path, "model")?;
    let data_path = required(data_path, "data")?;
    let model = model_io::load(&model_path)?;
    if slot.is_some() && !model.is_coupled() {
        return Err(CliError::Usage(format!(
            "--slot only applies to coupled models; {} has a single tensor",
            model.kind_name()
        )));
    }
    let slot = slot
        .as_deref()
        .unwrap_or("x")
        .parse::<Slot>()
        .map_err(CliError::Usage)?
        .0;

    let data = super::read_tensor(&data_path)?;
    let expected = match &model {
        ModelKind::Cpd(m) => m.shape(),
        ModelKind::Neat(m) => m.shape(),
        ModelKind::CoupledCpd(m) => m.shape(slot),
        ModelKind::CoupledNeat(m) => m.shape(slot),
    };
    if data.shape() != expected.as_slice() {
        return Err(CliError::Data(format!(
            "{}: shape {:?} does not match the model's {:?}",
            data_path.display(),
            data.shape(),
            expected
        )));
    }
    let value = match &model {
        ModelKind::Cpd(m) => rmse(&data, |i| m.reconstruct(i))?,
        ModelKind::Neat(m) => rmse(&data, |i| m.predict(i))?,
        ModelKind::CoupledCpd(m) => rmse(&data, |i| m.predict(slot, i))?,
        ModelKind::CoupledNeat(m) => rmse(&data, |i| m.predict(slot, i))?,
    };

    let mut summary = format!("entries = {}\n", data.len());
    summary.push_str(&format!("test_rmse = {value}\n"));
    if let Some(out) = &out {
        let mut echo = ResolvedConfig::new("eval");
        echo.push("model", model_path.display())
            .push("data", data_path.display());
        if model.is_coupled() {
            echo.push("slot", slot_name(slot));
        }
        echo.push("out", out.display());
        echo.write_for(out)?;
        write_output(&prefixed(out, "eval.txt"), &summary)?;
    }
    print!("{summary}");
    Ok(())
}
