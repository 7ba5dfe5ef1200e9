//! `components`: per-component weights, contribution scores, and tags.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use coact_core::{
    identify_components, rank_components, NeatError, TensorSlot, DEFAULT_ACTIVITY_THRESHOLD,
};

use crate::config::{prefixed, write_output, FileConfig, ResolvedConfig};
use crate::error::{required, CliError};
use crate::model_io::{self, ModelKind};

#[derive(Debug, Args)]
pub struct ComponentsArgs {
    /// Model file written by `fit`
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Activity threshold on max-normalized contribution scores;
    /// coupled-neat only [default: 0.5]
    #[arg(long, value_name = "T")]
    pub threshold: Option<f64>,
    /// Optional output prefix; writes .components.csv and .config.resolved
    /// instead of printing the CSV
    #[arg(long, value_name = "PREFIX")]
    pub out: Option<PathBuf>,
}

fn score_error(e: NeatError) -> CliError {
    CliError::Data(e.to_string())
}

/// CSV for one model. CP weights are ranked; neat contribution scores keep
/// component order so rows line up with the model file.
fn components_csv(model: &ModelKind, threshold: f64) -> Result<String, CliError> {
    let mut csv = String::new();
    match model {
        ModelKind::Cpd(m) => {
            csv.push_str("component,weight\n");
            let weights = m.weights();
            let mut order: Vec<usize> = (0..weights.len()).collect();
            order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
            for r in order {
                writeln!(csv, "{r},{}", weights[r]).expect("writing to a string");
            }
        }
        ModelKind::CoupledCpd(m) => {
            csv.push_str("component,weight_x,weight_y\n");
            for c in rank_components(m) {
                writeln!(csv, "{},{},{}", c.component, c.weight_x, c.weight_y)
                    .expect("writing to a string");
            }
        }
        ModelKind::Neat(m) => {
            csv.push_str("component,score\n");
            for r in 0..m.rank() {
                let score = m.component_contribution(r).map_err(score_error)?;
                writeln!(csv, "{r},{score}").expect("writing to a string");
            }
        }
        ModelKind::CoupledNeat(m) => {
            csv.push_str("component,score_x,score_y,tag\n");
            let tags = identify_components(m, threshold).map_err(score_error)?;
            for (r, tag) in tags.iter().enumerate() {
                let sx = m
                    .component_contribution(TensorSlot::X, r)
                    .map_err(score_error)?;
                let sy = m
                    .component_contribution(TensorSlot::Y, r)
                    .map_err(score_error)?;
                writeln!(csv, "{r},{sx},{sy},{tag}").expect("writing to a string");
            }
        }
    }
    Ok(csv)
}

pub fn run(args: &ComponentsArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut section = file.section("components");
    let model_path = args.model.clone().or(section.take("model")?);
    let threshold = args.threshold.or(section.take("threshold")?);
    let out = args.out.clone().or(section.take("out")?);
    section.finish()?;

    let model_path = required(model_path, "model")?;
    let model = model_io::load(&model_path)?;
    if threshold.is_some() && !matches!(model, ModelKind::CoupledNeat(_)) {
        return Err(CliError::Usage(format!(
            "--threshold only applies to coupled-neat models, not {}",
            model.kind_name()
        )));
    }
    let threshold = threshold.unwrap_or(DEFAULT_ACTIVITY_THRESHOLD);
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(CliError::Usage(format!(
            "threshold must be in (0, 1], got {threshold}"
        )));
    }

    let csv = components_csv(&model, threshold)?;
    match &out {
        Some(out) => {
            let mut echo = ResolvedConfig::new("components");
            echo.push("model", model_path.display());
            if matches!(model, ModelKind::CoupledNeat(_)) {
                echo.push("threshold", threshold);
            }
            echo.push("out", out.display());
            echo.write_for(out)?;
            write_output(&prefixed(out, "components.csv"), &csv)?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}
