//! Sparse tensors, nonnegativity maps, and the multilinear model types.
//!
//! Tensors are stored as sorted coordinate lists: the recordings this crate
//! targets are overwhelmingly sparse (a few thousand observed cells out of
//! millions), and every downstream routine only ever iterates over observed
//! entries. Factor matrices hold *raw* (unconstrained) parameters; the
//! nonnegativity map is applied on read so that optimizers can work in an
//! unconstrained space.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::ParseError;
use crate::matrix::Matrix;

/// Elementwise map that turns raw parameters into nonnegative ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonnegMap {
    /// `ln(1 + e^x)`, evaluated in a form that does not overflow.
    Softplus,
    /// `max(0, x)`.
    Relu,
}

impl NonnegMap {
    /// Applies the map to a raw value.
    pub fn apply(self, x: f64) -> f64 {
        match self {
            // For large |x| the naive form overflows; split on the sign so the
            // exponent argument is always nonpositive.
            NonnegMap::Softplus => {
                if x > 0.0 {
                    x + (-x).exp().ln_1p()
                } else {
                    x.exp().ln_1p()
                }
            }
            NonnegMap::Relu => x.max(0.0),
        }
    }

    /// Derivative of the map at a raw value.
    ///
    /// For `Relu` the subgradient at 0 is taken to be 0.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            NonnegMap::Softplus => 1.0 / (1.0 + (-x).exp()),
            NonnegMap::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for NonnegMap {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "softplus" => Ok(NonnegMap::Softplus),
            "relu" => Ok(NonnegMap::Relu),
            other => Err(format!("unknown nonnegativity map `{other}`")),
        }
    }
}

/// Which tensor of a coupled pair an index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorSlot {
    X,
    Y,
}

/// A single invariant violation found by [`SparseTensor::validate`].
///
/// `entry` is the position of the offending entry in the sorted entry list.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("entry {entry}: duplicate index {index:?}")]
    DuplicateIndex { entry: usize, index: Vec<usize> },
    #[error("entry {entry}: index {index:?} out of bounds for shape {shape:?}")]
    IndexOutOfBounds {
        entry: usize,
        index: Vec<usize>,
        shape: Vec<usize>,
    },
    #[error("entry {entry}: non-finite value {value}")]
    NonFiniteValue { entry: usize, value: f64 },
}

/// Every violation found in a tensor, not just the first.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("tensor `{name}` failed validation:\n{report}")]
    Invalid {
        name: String,
        report: ValidationReport,
    },
    #[error("index {index:?} out of bounds for shape {shape:?}")]
    IndexOutOfBounds {
        index: Vec<usize>,
        shape: Vec<usize>,
    },
    #[error("tensor has no entries")]
    EmptyTensor,
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Sparse tensor with 2 or 3 modes, stored as a coordinate list sorted by
/// index tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseTensor {
    name: String,
    shape: Vec<usize>,
    entries: Vec<(Vec<usize>, f64)>,
}

impl SparseTensor {
    /// Builds a tensor from unsorted entries. Entries are sorted by index
    /// tuple; no invariants are checked — call [`validate`](Self::validate)
    /// to get a full report.
    pub fn new(
        name: impl Into<String>,
        shape: Vec<usize>,
        mut entries: Vec<(Vec<usize>, f64)>,
    ) -> Self {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        SparseTensor {
            name: name.into(),
            shape,
            entries,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn n_modes(&self) -> usize {
        self.shape.len()
    }

    /// Number of stored entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by index tuple.
    pub fn entries(&self) -> &[(Vec<usize>, f64)] {
        &self.entries
    }

    /// Checks every structural invariant and reports *all* violations:
    /// index arity and bounds, finite values, and duplicate indices.
    pub fn validate(&self) -> Result<(), ValidationReport> {
        let mut violations = Vec::new();
        for (pos, (index, value)) in self.entries.iter().enumerate() {
            let in_bounds = index.len() == self.shape.len()
                && index.iter().zip(&self.shape).all(|(&i, &d)| i < d);
            if !in_bounds {
                violations.push(Violation::IndexOutOfBounds {
                    entry: pos,
                    index: index.clone(),
                    shape: self.shape.clone(),
                });
            }
            if !value.is_finite() {
                violations.push(Violation::NonFiniteValue {
                    entry: pos,
                    value: *value,
                });
            }
            if pos > 0 && self.entries[pos - 1].0 == *index {
                violations.push(Violation::DuplicateIndex {
                    entry: pos,
                    index: index.clone(),
                });
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ValidationReport { violations })
        }
    }

    /// Validates and wraps the report in a [`TensorError`] carrying the
    /// tensor name, for callers that just want to bail out.
    pub fn validated(self) -> Result<Self, TensorError> {
        match self.validate() {
            Ok(()) => Ok(self),
            Err(report) => Err(TensorError::Invalid {
                name: self.name.clone(),
                report,
            }),
        }
    }

    /// Reads a tensor from the plain-text coordinate format:
    ///
    /// ```text
    /// dims 20 30 10
    /// 0 0 0 1.5
    /// 0 2 9 0.25
    /// ```
    ///
    /// Indices are 0-based; blank lines are ignored. The parsed tensor is
    /// validated before being returned.
    pub fn read_coo(reader: impl BufRead, name: impl Into<String>) -> Result<Self, TensorError> {
        let mut shape: Option<Vec<usize>> = None;
        let mut entries = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            match &shape {
                None => {
                    if fields[0] != "dims" {
                        return Err(ParseError::new(
                            lineno,
                            format!("expected `dims` header, found `{}`", fields[0]),
                        )
                        .into());
                    }
                    let dims: Vec<usize> = fields[1..]
                        .iter()
                        .map(|f| {
                            f.parse::<usize>().map_err(|_| {
                                ParseError::new(lineno, format!("invalid dimension `{f}`"))
                            })
                        })
                        .collect::<Result<_, _>>()?;
                    if dims.len() != 2 && dims.len() != 3 {
                        return Err(ParseError::new(
                            lineno,
                            format!("expected 2 or 3 dimensions, found {}", dims.len()),
                        )
                        .into());
                    }
                    shape = Some(dims);
                }
                Some(dims) => {
                    if fields.len() != dims.len() + 1 {
                        return Err(ParseError::new(
                            lineno,
                            format!(
                                "expected {} indices and a value, found {} fields",
                                dims.len(),
                                fields.len()
                            ),
                        )
                        .into());
                    }
                    let index: Vec<usize> = fields[..dims.len()]
                        .iter()
                        .map(|f| {
                            f.parse::<usize>().map_err(|_| {
                                ParseError::new(lineno, format!("invalid index `{f}`"))
                            })
                        })
                        .collect::<Result<_, _>>()?;
                    let value: f64 = fields[dims.len()].parse().map_err(|_| {
                        ParseError::new(lineno, format!("invalid value `{}`", fields[dims.len()]))
                    })?;
                    entries.push((index, value));
                }
            }
        }
        let shape = shape.ok_or_else(|| ParseError::new(1, "missing `dims` header"))?;
        SparseTensor::new(name, shape, entries).validated()
    }

    /// Writes the tensor in the format accepted by [`read_coo`](Self::read_coo).
    /// Values use Rust's shortest round-trip float formatting, so a
    /// write/read cycle reproduces the tensor bit for bit.
    pub fn write_coo(&self, mut writer: impl Write) -> std::io::Result<()> {
        write!(writer, "dims")?;
        for d in &self.shape {
            write!(writer, " {d}")?;
        }
        writeln!(writer)?;
        for (index, value) in &self.entries {
            for i in index {
                write!(writer, "{i} ")?;
            }
            writeln!(writer, "{value}")?;
        }
        Ok(())
    }
}

/// Root mean squared error of `predict` over the stored entries of `tensor`.
pub fn rmse(
    tensor: &SparseTensor,
    mut predict: impl FnMut(&[usize]) -> Result<f64, TensorError>,
) -> Result<f64, TensorError> {
    if tensor.is_empty() {
        return Err(TensorError::EmptyTensor);
    }
    let mut sse = 0.0;
    for (index, value) in tensor.entries() {
        let r = predict(index)? - value;
        sse += r * r;
    }
    Ok((sse / tensor.len() as f64).sqrt())
}

fn check_index(index: &[usize], shape: &[usize]) -> Result<(), TensorError> {
    let ok = index.len() == shape.len() && index.iter().zip(shape).all(|(&i, &d)| i < d);
    if ok {
        Ok(())
    } else {
        Err(TensorError::IndexOutOfBounds {
            index: index.to_vec(),
            shape: shape.to_vec(),
        })
    }
}

/// Rank-R multilinear model of a single tensor. Factor matrices and
/// component weights are stored raw; the nonnegativity map is applied on
/// evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpModel {
    raw_factors: Vec<Matrix>,
    raw_weights: Vec<f64>,
    nonneg_map: NonnegMap,
}

impl CpModel {
    /// # Panics
    ///
    /// Panics if the factor list is not 2 or 3 matrices or if any column
    /// count differs from the weight count.
    pub fn new(raw_factors: Vec<Matrix>, raw_weights: Vec<f64>, nonneg_map: NonnegMap) -> Self {
        assert!(
            raw_factors.len() == 2 || raw_factors.len() == 3,
            "expected 2 or 3 factor matrices, got {}",
            raw_factors.len()
        );
        let rank = raw_weights.len();
        assert!(rank >= 1, "rank must be at least 1");
        for (m, f) in raw_factors.iter().enumerate() {
            assert_eq!(
                f.cols(),
                rank,
                "factor {m} has {} columns, expected {rank}",
                f.cols()
            );
        }
        CpModel {
            raw_factors,
            raw_weights,
            nonneg_map,
        }
    }

    pub fn rank(&self) -> usize {
        self.raw_weights.len()
    }

    pub fn n_modes(&self) -> usize {
        self.raw_factors.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.raw_factors.iter().map(Matrix::rows).collect()
    }

    pub fn nonneg_map(&self) -> NonnegMap {
        self.nonneg_map
    }

    pub fn raw_factors(&self) -> &[Matrix] {
        &self.raw_factors
    }

    pub fn raw_weights(&self) -> &[f64] {
        &self.raw_weights
    }

    /// Factor matrix for `mode` after the nonnegativity map.
    pub fn factor(&self, mode: usize) -> Matrix {
        self.raw_factors[mode].map(|x| self.nonneg_map.apply(x))
    }

    /// Component weights after the nonnegativity map.
    pub fn weights(&self) -> Vec<f64> {
        self.raw_weights
            .iter()
            .map(|&w| self.nonneg_map.apply(w))
            .collect()
    }

    /// Copy of the model with `extra` additional components whose raw
    /// factor entries and weights are all `raw_fill`. With a softplus map
    /// and a strongly negative fill the new components start effectively
    /// silent, which makes this the natural warm start for a higher-rank
    /// refit.
    pub fn padded(&self, extra: usize, raw_fill: f64) -> CpModel {
        let rank = self.rank() + extra;
        let factors = self
            .raw_factors
            .iter()
            .map(|f| {
                Matrix::from_fn(f.rows(), rank, |i, r| {
                    if r < f.cols() {
                        f.get(i, r)
                    } else {
                        raw_fill
                    }
                })
            })
            .collect();
        let mut weights = self.raw_weights.clone();
        weights.resize(rank, raw_fill);
        CpModel::new(factors, weights, self.nonneg_map)
    }

    /// Model value at `index`: the weighted sum over components of the
    /// product of mapped factor entries.
    pub fn reconstruct(&self, index: &[usize]) -> Result<f64, TensorError> {
        check_index(index, &self.shape())?;
        let mut total = 0.0;
        for r in 0..self.rank() {
            let mut term = self.nonneg_map.apply(self.raw_weights[r]);
            for (m, &i) in index.iter().enumerate() {
                term *= self.nonneg_map.apply(self.raw_factors[m].get(i, r));
            }
            total += term;
        }
        Ok(total)
    }
}

/// Multilinear model of a coupled pair: the trial and time factors are
/// shared between X and Y, each tensor keeps its own third-mode factor
/// (when it has three modes) and its own component weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledCpModel {
    trial_factor: Matrix,
    time_factor: Matrix,
    x_mode3: Option<Matrix>,
    y_mode3: Option<Matrix>,
    x_weights: Vec<f64>,
    y_weights: Vec<f64>,
    nonneg_map: NonnegMap,
}

impl CoupledCpModel {
    /// # Panics
    ///
    /// Panics if any factor's column count differs from the weight counts,
    /// or if the two weight vectors have different lengths.
    pub fn new(
        trial_factor: Matrix,
        time_factor: Matrix,
        x_mode3: Option<Matrix>,
        y_mode3: Option<Matrix>,
        x_weights: Vec<f64>,
        y_weights: Vec<f64>,
        nonneg_map: NonnegMap,
    ) -> Self {
        let rank = x_weights.len();
        assert!(rank >= 1, "rank must be at least 1");
        assert_eq!(y_weights.len(), rank, "weight vectors must share the rank");
        for (name, f) in [("trial", Some(&trial_factor)), ("time", Some(&time_factor))]
            .into_iter()
            .chain([
                ("x mode 3", x_mode3.as_ref()),
                ("y mode 3", y_mode3.as_ref()),
            ])
        {
            if let Some(f) = f {
                assert_eq!(
                    f.cols(),
                    rank,
                    "{name} factor has {} columns, expected {rank}",
                    f.cols()
                );
            }
        }
        CoupledCpModel {
            trial_factor,
            time_factor,
            x_mode3,
            y_mode3,
            x_weights,
            y_weights,
            nonneg_map,
        }
    }

    pub fn rank(&self) -> usize {
        self.x_weights.len()
    }

    pub fn nonneg_map(&self) -> NonnegMap {
        self.nonneg_map
    }

    pub fn trial_factor(&self) -> &Matrix {
        &self.trial_factor
    }

    pub fn time_factor(&self) -> &Matrix {
        &self.time_factor
    }

    pub fn mode3_factor(&self, slot: TensorSlot) -> Option<&Matrix> {
        match slot {
            TensorSlot::X => self.x_mode3.as_ref(),
            TensorSlot::Y => self.y_mode3.as_ref(),
        }
    }

    pub fn raw_weights(&self, slot: TensorSlot) -> &[f64] {
        match slot {
            TensorSlot::X => &self.x_weights,
            TensorSlot::Y => &self.y_weights,
        }
    }

    /// Component weights for `slot` after the nonnegativity map.
    pub fn weights(&self, slot: TensorSlot) -> Vec<f64> {
        self.raw_weights(slot)
            .iter()
            .map(|&w| self.nonneg_map.apply(w))
            .collect()
    }

    /// Shape of the tensor that `slot` models.
    pub fn shape(&self, slot: TensorSlot) -> Vec<usize> {
        let mut shape = vec![self.trial_factor.rows(), self.time_factor.rows()];
        if let Some(f) = self.mode3_factor(slot) {
            shape.push(f.rows());
        }
        shape
    }

    /// Model value for one entry of the X or Y tensor.
    pub fn predict(&self, slot: TensorSlot, index: &[usize]) -> Result<f64, TensorError> {
        check_index(index, &self.shape(slot))?;
        let weights = self.raw_weights(slot);
        let mode3 = self.mode3_factor(slot);
        let mut total = 0.0;
        for (r, &weight) in weights.iter().enumerate() {
            let mut term = self.nonneg_map.apply(weight)
                * self.nonneg_map.apply(self.trial_factor.get(index[0], r))
                * self.nonneg_map.apply(self.time_factor.get(index[1], r));
            if let Some(f) = mode3 {
                term *= self.nonneg_map.apply(f.get(index[2], r));
            }
            total += term;
        }
        Ok(total)
    }

    pub fn predict_x(&self, index: &[usize]) -> Result<f64, TensorError> {
        self.predict(TensorSlot::X, index)
    }

    pub fn predict_y(&self, index: &[usize]) -> Result<f64, TensorError> {
        self.predict(TensorSlot::Y, index)
    }

    /// View of the X side as a standalone model (used when a coupled fit is
    /// compared entry-for-entry against an uncoupled one).
    pub fn x_model(&self) -> CpModel {
        let mut factors = vec![self.trial_factor.clone(), self.time_factor.clone()];
        if let Some(f) = &self.x_mode3 {
            factors.push(f.clone());
        }
        CpModel::new(factors, self.x_weights.clone(), self.nonneg_map)
    }
}
