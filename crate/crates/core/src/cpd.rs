//! Nonnegative multilinear decomposition of one tensor or a coupled pair.
//!
//! Both fits optimize raw (unconstrained) parameters; the nonnegativity map
//! is part of the model, so gradients carry its derivative. The coupled
//! objective shares the trial and time factors between the two tensors and
//! weights the second tensor's residuals by `coupling_weight`. A coupling
//! weight of zero reduces the coupled fit to the plain fit on X exactly:
//! the same parameters are drawn in the same order, Y entries never enter
//! the training stream, and the shared factors follow bit-identical update
//! sequences.

use serde::{Deserialize, Serialize};

use crate::tensor::{NonnegMap, SparseTensor, TensorError, TensorSlot};
use crate::train::{
    draw_normal, full_grad, init_rng, run_fit, run_fit_from, FitError, FitReport, TrainConfig,
    Trainable,
};
use crate::{CoupledCpModel, CpModel, Matrix};

fn multilinear_predict(
    params: &[f64],
    phi: NonnegMap,
    rank: usize,
    factor_offsets: &[usize],
    weight_offset: usize,
    index: &[usize],
) -> f64 {
    let mut pred = 0.0;
    for r in 0..rank {
        let mut term = phi.apply(params[weight_offset + r]);
        for (m, &i) in index.iter().enumerate() {
            term *= phi.apply(params[factor_offsets[m] + i * rank + r]);
        }
        pred += term;
    }
    pred
}

#[allow(clippy::too_many_arguments)]
fn multilinear_entry_grad(
    params: &[f64],
    phi: NonnegMap,
    rank: usize,
    factor_offsets: &[usize],
    weight_offset: usize,
    index: &[usize],
    target: f64,
    entry_weight: f64,
    scale: f64,
    grad: &mut [f64],
) {
    let pred = multilinear_predict(params, phi, rank, factor_offsets, weight_offset, index);
    let coeff = scale * entry_weight * 2.0 * (pred - target);
    let modes = index.len();
    for r in 0..rank {
        let raw_w = params[weight_offset + r];
        let w = phi.apply(raw_w);
        let mut raw = [0.0_f64; 3];
        let mut mapped = [1.0_f64; 3];
        for (m, &i) in index.iter().enumerate() {
            raw[m] = params[factor_offsets[m] + i * rank + r];
            mapped[m] = phi.apply(raw[m]);
        }
        let prod: f64 = mapped[..modes].iter().product();
        grad[weight_offset + r] += coeff * prod * phi.derivative(raw_w);
        for (m, &i) in index.iter().enumerate() {
            let mut others = w;
            for (j, &vj) in mapped[..modes].iter().enumerate() {
                if j != m {
                    others *= vj;
                }
            }
            grad[factor_offsets[m] + i * rank + r] += coeff * others * phi.derivative(raw[m]);
        }
    }
}

fn check_modes(tensor: &SparseTensor) -> Result<(), FitError> {
    if tensor.n_modes() == 2 || tensor.n_modes() == 3 {
        Ok(())
    } else {
        Err(FitError::ShapeMismatch(format!(
            "tensor `{}` has {} modes, expected 2 or 3",
            tensor.name(),
            tensor.n_modes()
        )))
    }
}

fn check_nonempty(tensor: &SparseTensor) -> Result<(), FitError> {
    if tensor.is_empty() {
        Err(FitError::EmptyTensor {
            name: tensor.name().to_string(),
        })
    } else {
        Ok(())
    }
}

/// Sum-of-squared-residuals objective for a single tensor.
///
/// Flat parameter layout: one row-major block per factor matrix (rows ×
/// rank), then the component weights. Exposed so callers can check the
/// analytic gradient against finite differences.
pub struct CpObjective<'a> {
    tensor: &'a SparseTensor,
    rank: usize,
    phi: NonnegMap,
    factor_offsets: Vec<usize>,
    weight_offset: usize,
    param_len: usize,
}

impl<'a> CpObjective<'a> {
    pub fn new(tensor: &'a SparseTensor, config: &TrainConfig) -> Result<Self, FitError> {
        config.check()?;
        check_modes(tensor)?;
        check_nonempty(tensor)?;
        let rank = config.rank;
        let mut factor_offsets = Vec::with_capacity(tensor.n_modes());
        let mut offset = 0;
        for &dim in tensor.shape() {
            factor_offsets.push(offset);
            offset += dim * rank;
        }
        Ok(CpObjective {
            tensor,
            rank,
            phi: config.nonneg_map,
            factor_offsets,
            weight_offset: offset,
            param_len: offset + rank,
        })
    }

    pub fn param_len(&self) -> usize {
        self.param_len
    }

    /// Initial raw parameters for a seed: factors mode by mode, then
    /// weights, all Normal(0, 0.5).
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        self.init_flat(seed)
    }

    /// Full loss: sum of squared residuals over observed entries.
    pub fn loss(&self, params: &[f64]) -> f64 {
        self.weighted_sse(params).0
    }

    /// Analytic gradient of [`loss`](Self::loss).
    pub fn grad(&self, params: &[f64]) -> Vec<f64> {
        full_grad(self, params)
    }

    fn unpack(&self, params: &[f64]) -> CpModel {
        let mut factors = Vec::with_capacity(self.tensor.n_modes());
        for (m, &dim) in self.tensor.shape().iter().enumerate() {
            let start = self.factor_offsets[m];
            factors.push(Matrix::from_vec(
                dim,
                self.rank,
                params[start..start + dim * self.rank].to_vec(),
            ));
        }
        let weights = params[self.weight_offset..self.weight_offset + self.rank].to_vec();
        CpModel::new(factors, weights, self.phi)
    }

    fn pack(&self, model: &CpModel) -> Result<Vec<f64>, FitError> {
        let shape: Vec<usize> = self.tensor.shape().to_vec();
        if model.shape() != shape || model.rank() != self.rank {
            return Err(FitError::ShapeMismatch(format!(
                "initial model is rank {} over {:?}, fit wants rank {} over {:?}",
                model.rank(),
                model.shape(),
                self.rank,
                shape
            )));
        }
        let mut params = Vec::with_capacity(self.param_len);
        for factor in model.raw_factors() {
            params.extend_from_slice(factor.as_slice());
        }
        params.extend_from_slice(model.raw_weights());
        Ok(params)
    }
}

impl Trainable for CpObjective<'_> {
    fn param_len(&self) -> usize {
        self.param_len
    }

    fn init_flat(&self, seed: u64) -> Vec<f64> {
        let mut rng = init_rng(seed);
        draw_normal(&mut rng, self.param_len, 0.5)
    }

    fn entry_count(&self) -> usize {
        self.tensor.len()
    }

    fn entry_grad(&self, params: &[f64], entry: usize, scale: f64, grad: &mut [f64]) {
        let (index, value) = &self.tensor.entries()[entry];
        multilinear_entry_grad(
            params,
            self.phi,
            self.rank,
            &self.factor_offsets,
            self.weight_offset,
            index,
            *value,
            1.0,
            scale,
            grad,
        );
    }

    fn weighted_sse(&self, params: &[f64]) -> (f64, f64) {
        let mut sse = 0.0;
        for (index, value) in self.tensor.entries() {
            let r = multilinear_predict(
                params,
                self.phi,
                self.rank,
                &self.factor_offsets,
                self.weight_offset,
                index,
            ) - value;
            sse += r * r;
        }
        (sse, self.tensor.len() as f64)
    }
}

/// Weighted objective for a coupled pair sharing the first two factor
/// matrices.
///
/// Flat parameter layout: trial factor, time factor, X third-mode factor
/// (if any), X weights, Y third-mode factor (if any), Y weights. The
/// training stream is all X entries followed by all Y entries; with
/// `coupling_weight == 0` the Y entries are dropped from the stream
/// entirely, so Y-specific parameters keep their initial values.
pub struct CoupledCpObjective<'a> {
    x: &'a SparseTensor,
    y: &'a SparseTensor,
    rank: usize,
    phi: NonnegMap,
    coupling_weight: f64,
    x_factor_offsets: Vec<usize>,
    y_factor_offsets: Vec<usize>,
    x_weight_offset: usize,
    y_weight_offset: usize,
    param_len: usize,
}

impl<'a> CoupledCpObjective<'a> {
    pub fn new(
        x: &'a SparseTensor,
        y: &'a SparseTensor,
        config: &TrainConfig,
    ) -> Result<Self, FitError> {
        config.check()?;
        check_modes(x)?;
        check_modes(y)?;
        check_nonempty(x)?;
        check_nonempty(y)?;
        if x.shape()[0] != y.shape()[0] || x.shape()[1] != y.shape()[1] {
            return Err(FitError::ShapeMismatch(format!(
                "`{}` is {:?} but `{}` is {:?}; the first two modes must agree",
                x.name(),
                x.shape(),
                y.name(),
                y.shape()
            )));
        }
        let rank = config.rank;
        let trials = x.shape()[0];
        let time = x.shape()[1];

        let trial_offset = 0;
        let time_offset = trials * rank;
        let mut offset = time_offset + time * rank;

        let mut x_factor_offsets = vec![trial_offset, time_offset];
        if x.n_modes() == 3 {
            x_factor_offsets.push(offset);
            offset += x.shape()[2] * rank;
        }
        let x_weight_offset = offset;
        offset += rank;

        let mut y_factor_offsets = vec![trial_offset, time_offset];
        if y.n_modes() == 3 {
            y_factor_offsets.push(offset);
            offset += y.shape()[2] * rank;
        }
        let y_weight_offset = offset;
        offset += rank;

        Ok(CoupledCpObjective {
            x,
            y,
            rank,
            phi: config.nonneg_map,
            coupling_weight: config.coupling_weight,
            x_factor_offsets,
            y_factor_offsets,
            x_weight_offset,
            y_weight_offset,
            param_len: offset,
        })
    }

    pub fn param_len(&self) -> usize {
        self.param_len
    }

    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        self.init_flat(seed)
    }

    /// Full loss: X squared residuals plus `coupling_weight` times Y
    /// squared residuals.
    pub fn loss(&self, params: &[f64]) -> f64 {
        self.weighted_sse(params).0
    }

    /// Analytic gradient of [`loss`](Self::loss).
    pub fn grad(&self, params: &[f64]) -> Vec<f64> {
        full_grad(self, params)
    }

    fn unpack(&self, params: &[f64]) -> CoupledCpModel {
        let rank = self.rank;
        let slice_matrix = |offset: usize, rows: usize| {
            Matrix::from_vec(rows, rank, params[offset..offset + rows * rank].to_vec())
        };
        let trial_factor = slice_matrix(0, self.x.shape()[0]);
        let time_factor = slice_matrix(self.x_factor_offsets[1], self.x.shape()[1]);
        let x_mode3 = (self.x.n_modes() == 3)
            .then(|| slice_matrix(self.x_factor_offsets[2], self.x.shape()[2]));
        let y_mode3 = (self.y.n_modes() == 3)
            .then(|| slice_matrix(self.y_factor_offsets[2], self.y.shape()[2]));
        let x_weights = params[self.x_weight_offset..self.x_weight_offset + rank].to_vec();
        let y_weights = params[self.y_weight_offset..self.y_weight_offset + rank].to_vec();
        CoupledCpModel::new(
            trial_factor,
            time_factor,
            x_mode3,
            y_mode3,
            x_weights,
            y_weights,
            self.phi,
        )
    }
}

impl Trainable for CoupledCpObjective<'_> {
    fn param_len(&self) -> usize {
        self.param_len
    }

    fn init_flat(&self, seed: u64) -> Vec<f64> {
        // Draw in layout order. The prefix (trial, time, X mode 3, X
        // weights) consumes the generator exactly as the plain fit on X
        // does, which is what makes the zero-coupling reduction exact.
        let mut rng = init_rng(seed);
        draw_normal(&mut rng, self.param_len, 0.5)
    }

    fn entry_count(&self) -> usize {
        if self.coupling_weight == 0.0 {
            self.x.len()
        } else {
            self.x.len() + self.y.len()
        }
    }

    fn entry_grad(&self, params: &[f64], entry: usize, scale: f64, grad: &mut [f64]) {
        if entry < self.x.len() {
            let (index, value) = &self.x.entries()[entry];
            multilinear_entry_grad(
                params,
                self.phi,
                self.rank,
                &self.x_factor_offsets,
                self.x_weight_offset,
                index,
                *value,
                1.0,
                scale,
                grad,
            );
        } else {
            let (index, value) = &self.y.entries()[entry - self.x.len()];
            multilinear_entry_grad(
                params,
                self.phi,
                self.rank,
                &self.y_factor_offsets,
                self.y_weight_offset,
                index,
                *value,
                self.coupling_weight,
                scale,
                grad,
            );
        }
    }

    fn weighted_sse(&self, params: &[f64]) -> (f64, f64) {
        let mut sse = 0.0;
        for (index, value) in self.x.entries() {
            let r = multilinear_predict(
                params,
                self.phi,
                self.rank,
                &self.x_factor_offsets,
                self.x_weight_offset,
                index,
            ) - value;
            sse += r * r;
        }
        let mut weight = self.x.len() as f64;
        if self.coupling_weight > 0.0 {
            for (index, value) in self.y.entries() {
                let r = multilinear_predict(
                    params,
                    self.phi,
                    self.rank,
                    &self.y_factor_offsets,
                    self.y_weight_offset,
                    index,
                ) - value;
                sse += self.coupling_weight * r * r;
            }
            weight += self.coupling_weight * self.y.len() as f64;
        }
        (sse, weight)
    }
}

/// Fits a rank-`config.rank` model to one tensor.
pub fn fit_cp(
    tensor: &SparseTensor,
    config: &TrainConfig,
) -> Result<(CpModel, FitReport), FitError> {
    let objective = CpObjective::new(tensor, config)?;
    let (params, report) = run_fit(&objective, config)?;
    Ok((objective.unpack(&params), report))
}

/// Fits starting from an existing model instead of a random draw. The
/// initial model must match the tensor's shape and the config's rank.
pub fn fit_cp_warm(
    tensor: &SparseTensor,
    config: &TrainConfig,
    init: &CpModel,
) -> Result<(CpModel, FitReport), FitError> {
    let objective = CpObjective::new(tensor, config)?;
    let params = objective.pack(init)?;
    let (params, report) = run_fit_from(&objective, config, params)?;
    Ok((objective.unpack(&params), report))
}

/// Fits a coupled model to a pair of tensors sharing their first two modes.
pub fn fit_coupled_cp(
    x: &SparseTensor,
    y: &SparseTensor,
    config: &TrainConfig,
) -> Result<(CoupledCpModel, FitReport), FitError> {
    let objective = CoupledCpObjective::new(x, y, config)?;
    let (params, report) = run_fit(&objective, config)?;
    Ok((objective.unpack(&params), report))
}

/// Coupled loss of a model on a pair of tensors: X squared residuals plus
/// `coupling_weight` times Y squared residuals, summed over observed
/// entries.
pub fn coupled_cp_loss(
    model: &CoupledCpModel,
    x: &SparseTensor,
    y: &SparseTensor,
    coupling_weight: f64,
) -> Result<f64, TensorError> {
    for (slot, tensor) in [(TensorSlot::X, x), (TensorSlot::Y, y)] {
        let expected = model.shape(slot);
        if tensor.shape() != expected {
            return Err(TensorError::ShapeMismatch {
                expected,
                found: tensor.shape().to_vec(),
            });
        }
    }
    let mut loss = 0.0;
    for (index, value) in x.entries() {
        let r = model.predict_x(index)? - value;
        loss += r * r;
    }
    for (index, value) in y.entries() {
        let r = model.predict_y(index)? - value;
        loss += coupling_weight * r * r;
    }
    Ok(loss)
}

/// Mapped component weights of a fitted coupled model, sorted by descending
/// combined weight (ties broken by ascending component index).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentImportance {
    pub component: usize,
    pub weight_x: f64,
    pub weight_y: f64,
}

pub fn rank_components(model: &CoupledCpModel) -> Vec<ComponentImportance> {
    let wx = model.weights(TensorSlot::X);
    let wy = model.weights(TensorSlot::Y);
    let mut ranked: Vec<ComponentImportance> = (0..model.rank())
        .map(|r| ComponentImportance {
            component: r,
            weight_x: wx[r],
            weight_y: wy[r],
        })
        .collect();
    ranked.sort_by(|a, b| {
        let sa = a.weight_x + a.weight_y;
        let sb = b.weight_x + b.weight_y;
        sb.partial_cmp(&sa)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.component.cmp(&b.component))
    });
    ranked
}
