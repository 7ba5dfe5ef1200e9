//! Neural additive tensor decomposition: per-component heads applied to
//! the concatenated (mapped) factor values, summed over components.
//!
//! Each component r of a rank-R model owns a small head; the prediction for
//! an entry is `Σ_r head_r(φ([factor values at the index]))`. Heads default
//! to a single affine layer, which keeps the contribution score — the sum
//! of a head's weights and bias — well defined; deeper heads (ReLU hidden
//! layers) can be trained but are excluded from contribution scoring and
//! component identification. The coupled variant shares the trial and time
//! factors between both tensors while every head stays tensor-specific.

use serde::{Deserialize, Serialize};

use crate::tensor::{NonnegMap, SparseTensor, TensorError, TensorSlot};
use crate::train::{
    draw_normal, full_grad, init_rng, run_fit, FitError, FitReport, TrainConfig, Trainable,
};
use crate::Matrix;

/// Default activity threshold for [`identify_components`].
pub const DEFAULT_ACTIVITY_THRESHOLD: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum NeatError {
    #[error(
        "component {component} head has {layers} layers; contribution scoring needs exactly one"
    )]
    DeepHeadUnsupported { component: usize, layers: usize },
    #[error("all {slot:?} contribution scores are <= 0; components cannot be identified")]
    DegenerateScores { slot: TensorSlot },
}

/// One affine layer of a component head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadLayer {
    /// `output x input`, row-major.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Per-component network mapping the mapped factor values to a scalar.
/// Hidden layers use ReLU; the output layer is affine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentHead {
    layers: Vec<HeadLayer>,
}

impl ComponentHead {
    /// # Panics
    ///
    /// Panics if the layer list is empty, widths do not chain, any layer's
    /// bias length differs from its row count, or the final width is not 1.
    pub fn new(layers: Vec<HeadLayer>) -> Self {
        assert!(!layers.is_empty(), "a head needs at least one layer");
        for (l, layer) in layers.iter().enumerate() {
            assert_eq!(
                layer.bias.len(),
                layer.weights.rows(),
                "layer {l} bias length does not match its output width"
            );
            if l > 0 {
                assert_eq!(
                    layer.weights.cols(),
                    layers[l - 1].weights.rows(),
                    "layer {l} input width does not match the previous output"
                );
            }
        }
        assert_eq!(
            layers.last().unwrap().weights.rows(),
            1,
            "the final layer must produce a scalar"
        );
        ComponentHead { layers }
    }

    /// Single affine layer `weights . input + bias`.
    pub fn affine(weights: Vec<f64>, bias: f64) -> Self {
        let n = weights.len();
        ComponentHead::new(vec![HeadLayer {
            weights: Matrix::from_vec(1, n, weights),
            bias: vec![bias],
        }])
    }

    pub fn layers(&self) -> &[HeadLayer] {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weights.cols()
    }

    /// Evaluates the head on an input of length [`input_width`](Self::input_width).
    pub fn forward(&self, input: &[f64]) -> f64 {
        debug_assert_eq!(input.len(), self.input_width());
        let mut h = input.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.bias.len());
            for j in 0..layer.bias.len() {
                let mut acc = layer.bias[j];
                for (i, &hi) in h.iter().enumerate() {
                    acc += layer.weights.get(j, i) * hi;
                }
                if l + 1 < self.layers.len() {
                    acc = acc.max(0.0);
                }
                out.push(acc);
            }
            h = out;
        }
        h[0]
    }

    /// Sum of weights and bias for a one-layer head; `None` for deeper
    /// heads, where the score is undefined.
    pub fn contribution_score(&self) -> Option<f64> {
        if self.layers.len() != 1 {
            return None;
        }
        let layer = &self.layers[0];
        Some(layer.weights.as_slice().iter().sum::<f64>() + layer.bias[0])
    }
}

/// Neural additive model of a single tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeatModel {
    raw_factors: Vec<Matrix>,
    heads: Vec<ComponentHead>,
    nonneg_map: NonnegMap,
}

impl NeatModel {
    /// # Panics
    ///
    /// Panics if the head count does not match the factor column count or
    /// any head's input width differs from the number of modes.
    pub fn new(raw_factors: Vec<Matrix>, heads: Vec<ComponentHead>, nonneg_map: NonnegMap) -> Self {
        assert!(
            raw_factors.len() == 2 || raw_factors.len() == 3,
            "expected 2 or 3 factor matrices"
        );
        assert!(!heads.is_empty(), "rank must be at least 1");
        for (m, f) in raw_factors.iter().enumerate() {
            assert_eq!(
                f.cols(),
                heads.len(),
                "factor {m} columns must equal the head count"
            );
        }
        for (r, head) in heads.iter().enumerate() {
            assert_eq!(
                head.input_width(),
                raw_factors.len(),
                "head {r} input width must equal the mode count"
            );
        }
        NeatModel {
            raw_factors,
            heads,
            nonneg_map,
        }
    }

    pub fn rank(&self) -> usize {
        self.heads.len()
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

    pub fn heads(&self) -> &[ComponentHead] {
        &self.heads
    }

    /// Factor matrix for `mode` after the nonnegativity map.
    pub fn factor(&self, mode: usize) -> Matrix {
        self.raw_factors[mode].map(|x| self.nonneg_map.apply(x))
    }

    /// Model value at `index`: the sum over components of each head applied
    /// to that component's mapped factor values.
    pub fn predict(&self, index: &[usize]) -> Result<f64, TensorError> {
        let shape = self.shape();
        check_index(index, &shape)?;
        let mut total = 0.0;
        let mut features = [0.0_f64; 3];
        for (r, head) in self.heads.iter().enumerate() {
            for (m, &i) in index.iter().enumerate() {
                features[m] = self.nonneg_map.apply(self.raw_factors[m].get(i, r));
            }
            total += head.forward(&features[..index.len()]);
        }
        Ok(total)
    }

    /// Contribution score of component `r` (one-layer heads only).
    pub fn component_contribution(&self, r: usize) -> Result<f64, NeatError> {
        self.heads[r]
            .contribution_score()
            .ok_or(NeatError::DeepHeadUnsupported {
                component: r,
                layers: self.heads[r].layer_count(),
            })
    }
}

/// Neural additive model of a coupled pair: shared trial/time factors,
/// tensor-specific third-mode factors and heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledNeatModel {
    trial_factor: Matrix,
    time_factor: Matrix,
    x_mode3: Option<Matrix>,
    y_mode3: Option<Matrix>,
    heads_x: Vec<ComponentHead>,
    heads_y: Vec<ComponentHead>,
    nonneg_map: NonnegMap,
}

impl CoupledNeatModel {
    /// # Panics
    ///
    /// Panics if the two head lists have different lengths, any factor's
    /// column count differs from the rank, or head input widths do not
    /// match their tensor's mode count.
    pub fn new(
        trial_factor: Matrix,
        time_factor: Matrix,
        x_mode3: Option<Matrix>,
        y_mode3: Option<Matrix>,
        heads_x: Vec<ComponentHead>,
        heads_y: Vec<ComponentHead>,
        nonneg_map: NonnegMap,
    ) -> Self {
        let rank = heads_x.len();
        assert!(rank >= 1, "rank must be at least 1");
        assert_eq!(heads_y.len(), rank, "head lists must share the rank");
        for f in [
            Some(&trial_factor),
            Some(&time_factor),
            x_mode3.as_ref(),
            y_mode3.as_ref(),
        ]
        .into_iter()
        .flatten()
        {
            assert_eq!(f.cols(), rank, "factor columns must equal the rank");
        }
        let x_modes = 2 + usize::from(x_mode3.is_some());
        let y_modes = 2 + usize::from(y_mode3.is_some());
        for head in &heads_x {
            assert_eq!(head.input_width(), x_modes);
        }
        for head in &heads_y {
            assert_eq!(head.input_width(), y_modes);
        }
        CoupledNeatModel {
            trial_factor,
            time_factor,
            x_mode3,
            y_mode3,
            heads_x,
            heads_y,
            nonneg_map,
        }
    }

    pub fn rank(&self) -> usize {
        self.heads_x.len()
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

    pub fn heads(&self, slot: TensorSlot) -> &[ComponentHead] {
        match slot {
            TensorSlot::X => &self.heads_x,
            TensorSlot::Y => &self.heads_y,
        }
    }

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
        let heads = self.heads(slot);
        let mode3 = self.mode3_factor(slot);
        let mut total = 0.0;
        let mut features = [0.0_f64; 3];
        for (r, head) in heads.iter().enumerate() {
            features[0] = self.nonneg_map.apply(self.trial_factor.get(index[0], r));
            features[1] = self.nonneg_map.apply(self.time_factor.get(index[1], r));
            if let Some(f) = mode3 {
                features[2] = self.nonneg_map.apply(f.get(index[2], r));
            }
            total += head.forward(&features[..index.len()]);
        }
        Ok(total)
    }

    /// Contribution score of component `r` on one side (one-layer heads
    /// only).
    pub fn component_contribution(&self, slot: TensorSlot, r: usize) -> Result<f64, NeatError> {
        let head = &self.heads(slot)[r];
        head.contribution_score()
            .ok_or(NeatError::DeepHeadUnsupported {
                component: r,
                layers: head.layer_count(),
            })
    }
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

/// How a component splits across a coupled pair, from its contribution
/// scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentTag {
    Shared,
    XSpecific,
    YSpecific,
    Inactive,
}

impl std::fmt::Display for ComponentTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ComponentTag::Shared => "shared",
            ComponentTag::XSpecific => "x-specific",
            ComponentTag::YSpecific => "y-specific",
            ComponentTag::Inactive => "inactive",
        };
        f.write_str(s)
    }
}

/// Tags each component Shared / XSpecific / YSpecific / Inactive.
///
/// Per tensor, contribution scores are normalized by that tensor's maximum
/// score (which must be positive); a component is active for a tensor when
/// its normalized score is at least `activity_threshold`. Normalization
/// makes the tags invariant under uniform positive rescaling of one
/// tensor's scores.
pub fn identify_components(
    model: &CoupledNeatModel,
    activity_threshold: f64,
) -> Result<Vec<ComponentTag>, NeatError> {
    let scores = |slot: TensorSlot| -> Result<Vec<f64>, NeatError> {
        (0..model.rank())
            .map(|r| model.component_contribution(slot, r))
            .collect()
    };
    let sx = scores(TensorSlot::X)?;
    let sy = scores(TensorSlot::Y)?;
    let active = |scores: &[f64], slot: TensorSlot| -> Result<Vec<bool>, NeatError> {
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max.is_nan() || max <= 0.0 {
            return Err(NeatError::DegenerateScores { slot });
        }
        Ok(scores
            .iter()
            .map(|&s| s / max >= activity_threshold)
            .collect())
    };
    let ax = active(&sx, TensorSlot::X)?;
    let ay = active(&sy, TensorSlot::Y)?;
    Ok(ax
        .iter()
        .zip(&ay)
        .map(|(&x, &y)| match (x, y) {
            (true, true) => ComponentTag::Shared,
            (true, false) => ComponentTag::XSpecific,
            (false, true) => ComponentTag::YSpecific,
            (false, false) => ComponentTag::Inactive,
        })
        .collect())
}

/// Head architecture shared by all heads of one tensor: level widths from
/// the input features down to the scalar output, plus parameter offsets of
/// each layer within a head's slice of the flat vector.
#[derive(Debug, Clone)]
struct HeadArch {
    widths: Vec<usize>,
    layer_offsets: Vec<(usize, usize)>,
    param_count: usize,
}

impl HeadArch {
    fn new(input_width: usize, hidden: &[usize]) -> Self {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input_width);
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut layer_offsets = Vec::with_capacity(widths.len() - 1);
        let mut offset = 0;
        for l in 0..widths.len() - 1 {
            let (inw, outw) = (widths[l], widths[l + 1]);
            layer_offsets.push((offset, offset + inw * outw));
            offset += inw * outw + outw;
        }
        HeadArch {
            widths,
            layer_offsets,
            param_count: offset,
        }
    }

    fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    /// Forward pass on one head's parameter slice, recording the input and
    /// every layer's (post-activation) outputs for the backward pass.
    fn forward(&self, head_params: &[f64], input: &[f64], acts: &mut Vec<Vec<f64>>) -> f64 {
        acts.clear();
        acts.push(input.to_vec());
        for l in 0..self.layer_count() {
            let (inw, outw) = (self.widths[l], self.widths[l + 1]);
            let (w_off, b_off) = self.layer_offsets[l];
            let mut out = Vec::with_capacity(outw);
            for j in 0..outw {
                let mut acc = head_params[b_off + j];
                for i in 0..inw {
                    acc += head_params[w_off + j * inw + i] * acts[l][i];
                }
                if l + 1 < self.layer_count() {
                    acc = acc.max(0.0);
                }
                out.push(acc);
            }
            acts.push(out);
        }
        acts[self.layer_count()][0]
    }

    /// Backward pass: adds `upstream` times the parameter gradients to
    /// `head_grad` and writes the gradient with respect to the input.
    fn backward(
        &self,
        head_params: &[f64],
        acts: &[Vec<f64>],
        upstream: f64,
        head_grad: &mut [f64],
        input_grad: &mut [f64],
    ) {
        let layers = self.layer_count();
        let mut dout = vec![upstream];
        for l in (0..layers).rev() {
            let (inw, outw) = (self.widths[l], self.widths[l + 1]);
            let (w_off, b_off) = self.layer_offsets[l];
            let mut din = vec![0.0; inw];
            for j in 0..outw {
                let mut g = dout[j];
                // Hidden outputs were clamped by ReLU; a zero output means
                // the unit was inactive and passes no gradient.
                if l + 1 < layers && acts[l + 1][j] <= 0.0 {
                    g = 0.0;
                }
                if g == 0.0 {
                    continue;
                }
                head_grad[b_off + j] += g;
                for i in 0..inw {
                    head_grad[w_off + j * inw + i] += g * acts[l][i];
                    din[i] += g * head_params[w_off + j * inw + i];
                }
            }
            dout = din;
        }
        input_grad.copy_from_slice(&dout);
    }

    /// Materializes one head from its slice of the flat vector.
    fn unpack(&self, head_params: &[f64]) -> ComponentHead {
        let mut layers = Vec::with_capacity(self.layer_count());
        for l in 0..self.layer_count() {
            let (inw, outw) = (self.widths[l], self.widths[l + 1]);
            let (w_off, b_off) = self.layer_offsets[l];
            layers.push(HeadLayer {
                weights: Matrix::from_vec(
                    outw,
                    inw,
                    head_params[w_off..w_off + outw * inw].to_vec(),
                ),
                bias: head_params[b_off..b_off + outw].to_vec(),
            });
        }
        ComponentHead::new(layers)
    }

    /// Draws one head's parameters, layer by layer, each layer Normal(0,
    /// 1/sqrt(fan_in)).
    fn draw(&self, rng: &mut rand_chacha::ChaCha8Rng, out: &mut Vec<f64>) {
        for l in 0..self.layer_count() {
            let (inw, outw) = (self.widths[l], self.widths[l + 1]);
            let std = 1.0 / (inw as f64).sqrt();
            out.extend(draw_normal(rng, inw * outw + outw, std));
        }
    }
}

/// Squared-residual objective for a single-tensor neural additive fit.
///
/// Flat layout: factor blocks as in the multilinear objective, then R head
/// blocks. Exposed for gradient checking.
pub struct NeatObjective<'a> {
    tensor: &'a SparseTensor,
    rank: usize,
    phi: NonnegMap,
    factor_offsets: Vec<usize>,
    heads_offset: usize,
    arch: HeadArch,
    param_len: usize,
}

impl<'a> NeatObjective<'a> {
    pub fn new(tensor: &'a SparseTensor, config: &TrainConfig) -> Result<Self, FitError> {
        config.check()?;
        check_fit_modes(tensor)?;
        check_fit_nonempty(tensor)?;
        let rank = config.rank;
        let mut factor_offsets = Vec::with_capacity(tensor.n_modes());
        let mut offset = 0;
        for &dim in tensor.shape() {
            factor_offsets.push(offset);
            offset += dim * rank;
        }
        let arch = HeadArch::new(tensor.n_modes(), &config.head_hidden);
        let param_len = offset + rank * arch.param_count;
        Ok(NeatObjective {
            tensor,
            rank,
            phi: config.nonneg_map,
            factor_offsets,
            heads_offset: offset,
            arch,
            param_len,
        })
    }

    pub fn param_len(&self) -> usize {
        self.param_len
    }

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

    fn head_offset(&self, r: usize) -> usize {
        self.heads_offset + r * self.arch.param_count
    }

    fn predict_entry(&self, params: &[f64], index: &[usize]) -> f64 {
        let mut features = [0.0_f64; 3];
        let mut acts = Vec::new();
        let mut pred = 0.0;
        for r in 0..self.rank {
            for (m, &i) in index.iter().enumerate() {
                features[m] = self
                    .phi
                    .apply(params[self.factor_offsets[m] + i * self.rank + r]);
            }
            let off = self.head_offset(r);
            pred += self.arch.forward(
                &params[off..off + self.arch.param_count],
                &features[..index.len()],
                &mut acts,
            );
        }
        pred
    }

    fn unpack(&self, params: &[f64]) -> NeatModel {
        let mut factors = Vec::with_capacity(self.tensor.n_modes());
        for (m, &dim) in self.tensor.shape().iter().enumerate() {
            let start = self.factor_offsets[m];
            factors.push(Matrix::from_vec(
                dim,
                self.rank,
                params[start..start + dim * self.rank].to_vec(),
            ));
        }
        let heads = (0..self.rank)
            .map(|r| {
                let off = self.head_offset(r);
                self.arch.unpack(&params[off..off + self.arch.param_count])
            })
            .collect();
        NeatModel::new(factors, heads, self.phi)
    }
}

impl Trainable for NeatObjective<'_> {
    fn param_len(&self) -> usize {
        self.param_len
    }

    fn init_flat(&self, seed: u64) -> Vec<f64> {
        let mut rng = init_rng(seed);
        let mut params = draw_normal(&mut rng, self.heads_offset, 0.5);
        for _ in 0..self.rank {
            self.arch.draw(&mut rng, &mut params);
        }
        params
    }

    fn entry_count(&self) -> usize {
        self.tensor.len()
    }

    fn entry_grad(&self, params: &[f64], entry: usize, scale: f64, grad: &mut [f64]) {
        let (index, value) = &self.tensor.entries()[entry];
        neat_entry_grad(
            params,
            self.phi,
            self.rank,
            &self.factor_offsets,
            |r| self.head_offset(r),
            &self.arch,
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
            let r = self.predict_entry(params, index) - value;
            sse += r * r;
        }
        (sse, self.tensor.len() as f64)
    }
}

/// Adds the gradient of one entry's weighted squared residual for a neural
/// additive prediction. Shared by the single and coupled objectives.
#[allow(clippy::too_many_arguments)]
fn neat_entry_grad(
    params: &[f64],
    phi: NonnegMap,
    rank: usize,
    factor_offsets: &[usize],
    head_offset: impl Fn(usize) -> usize,
    arch: &HeadArch,
    index: &[usize],
    target: f64,
    entry_weight: f64,
    scale: f64,
    grad: &mut [f64],
) {
    let modes = index.len();
    let mut features = [0.0_f64; 3];
    let mut acts_per_component: Vec<Vec<Vec<f64>>> = Vec::with_capacity(rank);
    let mut pred = 0.0;
    for r in 0..rank {
        for (m, &i) in index.iter().enumerate() {
            features[m] = phi.apply(params[factor_offsets[m] + i * rank + r]);
        }
        let off = head_offset(r);
        let mut acts = Vec::new();
        pred += arch.forward(
            &params[off..off + arch.param_count],
            &features[..modes],
            &mut acts,
        );
        acts_per_component.push(acts);
    }
    let coeff = scale * entry_weight * 2.0 * (pred - target);
    let mut input_grad = [0.0_f64; 3];
    for (r, acts) in acts_per_component.iter().enumerate() {
        let off = head_offset(r);
        let (head_params, head_grad) = (
            &params[off..off + arch.param_count],
            &mut grad[off..off + arch.param_count],
        );
        arch.backward(
            head_params,
            acts,
            coeff,
            head_grad,
            &mut input_grad[..modes],
        );
        for (m, &i) in index.iter().enumerate() {
            let slot = factor_offsets[m] + i * rank + r;
            grad[slot] += input_grad[m] * phi.derivative(params[slot]);
        }
    }
}

fn check_fit_modes(tensor: &SparseTensor) -> Result<(), FitError> {
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

fn check_fit_nonempty(tensor: &SparseTensor) -> Result<(), FitError> {
    if tensor.is_empty() {
        Err(FitError::EmptyTensor {
            name: tensor.name().to_string(),
        })
    } else {
        Ok(())
    }
}

/// Weighted objective for a coupled neural additive fit. Layout: trial and
/// time factors, X third-mode factor (if any), Y third-mode factor (if
/// any), R X-heads, R Y-heads.
pub struct CoupledNeatObjective<'a> {
    x: &'a SparseTensor,
    y: &'a SparseTensor,
    rank: usize,
    phi: NonnegMap,
    coupling_weight: f64,
    x_factor_offsets: Vec<usize>,
    y_factor_offsets: Vec<usize>,
    x_heads_offset: usize,
    y_heads_offset: usize,
    x_arch: HeadArch,
    y_arch: HeadArch,
    param_len: usize,
}

impl<'a> CoupledNeatObjective<'a> {
    pub fn new(
        x: &'a SparseTensor,
        y: &'a SparseTensor,
        config: &TrainConfig,
    ) -> Result<Self, FitError> {
        config.check()?;
        check_fit_modes(x)?;
        check_fit_modes(y)?;
        check_fit_nonempty(x)?;
        check_fit_nonempty(y)?;
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
        let mut y_factor_offsets = vec![trial_offset, time_offset];
        if y.n_modes() == 3 {
            y_factor_offsets.push(offset);
            offset += y.shape()[2] * rank;
        }

        let x_arch = HeadArch::new(x.n_modes(), &config.head_hidden);
        let y_arch = HeadArch::new(y.n_modes(), &config.head_hidden);
        let x_heads_offset = offset;
        offset += rank * x_arch.param_count;
        let y_heads_offset = offset;
        offset += rank * y_arch.param_count;

        Ok(CoupledNeatObjective {
            x,
            y,
            rank,
            phi: config.nonneg_map,
            coupling_weight: config.coupling_weight,
            x_factor_offsets,
            y_factor_offsets,
            x_heads_offset,
            y_heads_offset,
            x_arch,
            y_arch,
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

    fn predict_slot(&self, params: &[f64], slot: TensorSlot, index: &[usize]) -> f64 {
        let (factor_offsets, heads_offset, arch) = match slot {
            TensorSlot::X => (&self.x_factor_offsets, self.x_heads_offset, &self.x_arch),
            TensorSlot::Y => (&self.y_factor_offsets, self.y_heads_offset, &self.y_arch),
        };
        let mut features = [0.0_f64; 3];
        let mut acts = Vec::new();
        let mut pred = 0.0;
        for r in 0..self.rank {
            for (m, &i) in index.iter().enumerate() {
                features[m] = self
                    .phi
                    .apply(params[factor_offsets[m] + i * self.rank + r]);
            }
            let off = heads_offset + r * arch.param_count;
            pred += arch.forward(
                &params[off..off + arch.param_count],
                &features[..index.len()],
                &mut acts,
            );
        }
        pred
    }

    fn unpack(&self, params: &[f64]) -> CoupledNeatModel {
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
        let heads = |offset: usize, arch: &HeadArch| -> Vec<ComponentHead> {
            (0..rank)
                .map(|r| {
                    let off = offset + r * arch.param_count;
                    arch.unpack(&params[off..off + arch.param_count])
                })
                .collect()
        };
        CoupledNeatModel::new(
            trial_factor,
            time_factor,
            x_mode3,
            y_mode3,
            heads(self.x_heads_offset, &self.x_arch),
            heads(self.y_heads_offset, &self.y_arch),
            self.phi,
        )
    }
}

impl Trainable for CoupledNeatObjective<'_> {
    fn param_len(&self) -> usize {
        self.param_len
    }

    fn init_flat(&self, seed: u64) -> Vec<f64> {
        let mut rng = init_rng(seed);
        let mut params = draw_normal(&mut rng, self.x_heads_offset, 0.5);
        for _ in 0..self.rank {
            self.x_arch.draw(&mut rng, &mut params);
        }
        for _ in 0..self.rank {
            self.y_arch.draw(&mut rng, &mut params);
        }
        params
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
            neat_entry_grad(
                params,
                self.phi,
                self.rank,
                &self.x_factor_offsets,
                |r| self.x_heads_offset + r * self.x_arch.param_count,
                &self.x_arch,
                index,
                *value,
                1.0,
                scale,
                grad,
            );
        } else {
            let (index, value) = &self.y.entries()[entry - self.x.len()];
            neat_entry_grad(
                params,
                self.phi,
                self.rank,
                &self.y_factor_offsets,
                |r| self.y_heads_offset + r * self.y_arch.param_count,
                &self.y_arch,
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
            let r = self.predict_slot(params, TensorSlot::X, index) - value;
            sse += r * r;
        }
        let mut weight = self.x.len() as f64;
        if self.coupling_weight > 0.0 {
            for (index, value) in self.y.entries() {
                let r = self.predict_slot(params, TensorSlot::Y, index) - value;
                sse += self.coupling_weight * r * r;
            }
            weight += self.coupling_weight * self.y.len() as f64;
        }
        (sse, weight)
    }
}

/// Fits a neural additive model to one tensor.
pub fn fit_neat(
    tensor: &SparseTensor,
    config: &TrainConfig,
) -> Result<(NeatModel, FitReport), FitError> {
    let objective = NeatObjective::new(tensor, config)?;
    let (params, report) = run_fit(&objective, config)?;
    Ok((objective.unpack(&params), report))
}

/// Fits a coupled neural additive model to a pair of tensors sharing their
/// first two modes.
pub fn fit_coupled_neat(
    x: &SparseTensor,
    y: &SparseTensor,
    config: &TrainConfig,
) -> Result<(CoupledNeatModel, FitReport), FitError> {
    let objective = CoupledNeatObjective::new(x, y, config)?;
    let (params, report) = run_fit(&objective, config)?;
    Ok((objective.unpack(&params), report))
}
