//! Versioned on-disk model format.
//!
//! A model file is a single JSON document:
//!
//! ```text
//! {"format":"coact-model","version":1,"model":{"kind":"cpd", ...}}
//! ```
//!
//! The `kind` tag selects the payload: `cpd`, `coupled-cpd`, `neat`, or
//! `coupled-neat`. Payloads store the raw (pre-map) parameters, the
//! nonnegativity map, and the factor shapes, so evaluating a loaded model
//! reproduces the fitted model's predictions bit for bit. Loading
//! validates the structure before anything touches it, since a file edit
//! can break invariants the in-memory constructors enforce.

use std::path::Path;

use coact_core::{CoupledCpModel, CoupledNeatModel, CpModel, Matrix, NeatModel, TensorSlot};
use serde::{Deserialize, Serialize};

use crate::config::write_output;
use crate::error::CliError;

pub const FORMAT: &str = "coact-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub model: ModelKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    Cpd(CpModel),
    CoupledCpd(CoupledCpModel),
    Neat(NeatModel),
    CoupledNeat(CoupledNeatModel),
}

impl ModelKind {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelKind::Cpd(_) => "cpd",
            ModelKind::CoupledCpd(_) => "coupled-cpd",
            ModelKind::Neat(_) => "neat",
            ModelKind::CoupledNeat(_) => "coupled-neat",
        }
    }

    pub fn is_coupled(&self) -> bool {
        matches!(self, ModelKind::CoupledCpd(_) | ModelKind::CoupledNeat(_))
    }

    /// Structural invariants a hand-edited file could break.
    fn check(&self) -> Result<(), String> {
        match self {
            ModelKind::Cpd(m) => {
                if !(2..=3).contains(&m.n_modes()) {
                    return Err(format!(
                        "expected 2 or 3 factor matrices, found {}",
                        m.n_modes()
                    ));
                }
                if m.rank() == 0 {
                    return Err("rank must be at least 1".to_string());
                }
                for (mode, f) in m.raw_factors().iter().enumerate() {
                    check_matrix(f, &format!("mode {mode} factor"), m.rank())?;
                }
                Ok(())
            }
            ModelKind::CoupledCpd(m) => {
                let rank = m.rank();
                if rank == 0 {
                    return Err("rank must be at least 1".to_string());
                }
                if m.raw_weights(TensorSlot::Y).len() != rank {
                    return Err("x and y weight vectors disagree on the rank".to_string());
                }
                check_matrix(m.trial_factor(), "trial factor", rank)?;
                check_matrix(m.time_factor(), "time factor", rank)?;
                for (name, slot) in [
                    ("x mode-3 factor", TensorSlot::X),
                    ("y mode-3 factor", TensorSlot::Y),
                ] {
                    if let Some(f) = m.mode3_factor(slot) {
                        check_matrix(f, name, rank)?;
                    }
                }
                Ok(())
            }
            ModelKind::Neat(m) => {
                if !(2..=3).contains(&m.shape().len()) {
                    return Err(format!(
                        "expected 2 or 3 factor matrices, found {}",
                        m.shape().len()
                    ));
                }
                let rank = m.rank();
                if rank == 0 {
                    return Err("rank must be at least 1".to_string());
                }
                for (mode, f) in m.raw_factors().iter().enumerate() {
                    check_matrix(f, &format!("mode {mode} factor"), rank)?;
                }
                for (r, head) in m.heads().iter().enumerate() {
                    check_head(head, r, m.shape().len())?;
                }
                Ok(())
            }
            ModelKind::CoupledNeat(m) => {
                let rank = m.rank();
                if rank == 0 {
                    return Err("rank must be at least 1".to_string());
                }
                if m.heads(TensorSlot::Y).len() != rank {
                    return Err("x and y head lists disagree on the rank".to_string());
                }
                check_matrix(m.trial_factor(), "trial factor", rank)?;
                check_matrix(m.time_factor(), "time factor", rank)?;
                for (name, slot) in [
                    ("x mode-3 factor", TensorSlot::X),
                    ("y mode-3 factor", TensorSlot::Y),
                ] {
                    if let Some(f) = m.mode3_factor(slot) {
                        check_matrix(f, name, rank)?;
                    }
                }
                for slot in [TensorSlot::X, TensorSlot::Y] {
                    let modes = m.shape(slot).len();
                    for (r, head) in m.heads(slot).iter().enumerate() {
                        check_head(head, r, modes)?;
                    }
                }
                Ok(())
            }
        }
    }
}

fn check_matrix(m: &Matrix, what: &str, expected_cols: usize) -> Result<(), String> {
    if m.as_slice().len() != m.rows() * m.cols() {
        return Err(format!(
            "{what}: data length {} does not match {}x{}",
            m.as_slice().len(),
            m.rows(),
            m.cols()
        ));
    }
    if m.cols() != expected_cols {
        return Err(format!(
            "{what}: {} columns, expected {expected_cols}",
            m.cols()
        ));
    }
    Ok(())
}

fn check_head(
    head: &coact_core::ComponentHead,
    r: usize,
    expected_inputs: usize,
) -> Result<(), String> {
    let layers = head.layers();
    if layers.is_empty() {
        return Err(format!("head {r} has no layers"));
    }
    let mut width = expected_inputs;
    for (l, layer) in layers.iter().enumerate() {
        if layer.weights.as_slice().len() != layer.weights.rows() * layer.weights.cols() {
            return Err(format!("head {r} layer {l}: weight data length mismatch"));
        }
        if layer.weights.cols() != width {
            return Err(format!(
                "head {r} layer {l}: {} inputs, expected {width}",
                layer.weights.cols()
            ));
        }
        if layer.bias.len() != layer.weights.rows() {
            return Err(format!("head {r} layer {l}: bias length mismatch"));
        }
        width = layer.weights.rows();
    }
    if width != 1 {
        return Err(format!("head {r}: final layer must produce a scalar"));
    }
    Ok(())
}

/// Writes a model file.
pub fn save(path: &Path, model: &ModelKind) -> Result<(), CliError> {
    let file = ModelFile {
        format: FORMAT.to_string(),
        version: VERSION,
        model: model.clone(),
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| CliError::Runtime(format!("could not encode model: {e}")))?;
    write_output(path, &format!("{json}\n"))
}

/// Reads and validates a model file.
pub fn load(path: &Path) -> Result<ModelKind, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::in_file(path, e))?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| CliError::in_file(path, format!("not a model file: {e}")))?;
    if file.format != FORMAT {
        return Err(CliError::in_file(
            path,
            format!("unrecognized format `{}`, expected `{FORMAT}`", file.format),
        ));
    }
    if file.version != VERSION {
        return Err(CliError::in_file(
            path,
            format!("unsupported version {}, expected {VERSION}", file.version),
        ));
    }
    file.model
        .check()
        .map_err(|e| CliError::in_file(path, format!("invalid model: {e}")))?;
    Ok(file.model)
}
