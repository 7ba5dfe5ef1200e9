//! One module per subcommand. Each resolves its settings (flags over
//! config file over defaults), echoes the resolved configuration next to
//! its outputs, and runs.

pub mod components;
pub mod eval;
pub mod fit;
pub mod kappa;
pub mod label;
pub mod metrics;
pub mod prepare;

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use coact_core::SparseTensor;

use crate::error::CliError;

/// Opens an input file for buffered reading.
pub fn open_input(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::in_file(path, e))
}

/// Reads a COO tensor, named after its file for error messages.
pub fn read_tensor(path: &Path) -> Result<SparseTensor, CliError> {
    let reader = open_input(path)?;
    SparseTensor::read_coo(reader, path.display().to_string())
        .map_err(|e| CliError::in_file(path, e))
}
