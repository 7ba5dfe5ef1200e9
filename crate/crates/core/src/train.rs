//! Shared training machinery: configuration, Adam, and the mini-batch loop.
//!
//! Every fit in this crate — plain or coupled, multilinear or with neural
//! heads — optimizes a sum of weighted squared residuals over observed
//! entries with the same loop: seeded init, per-epoch shuffle, Adam updates
//! on batch means, full-pass train RMSE after each epoch, and early stopping
//! on stalled improvement. Runs are deterministic for a given seed: parameter
//! initialization and epoch shuffling draw from independent streams of one
//! counter-based generator, and all reductions happen in a fixed order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::tensor::NonnegMap;

/// Hyperparameters shared by all fitting routines.
///
/// `coupling_weight` only matters for coupled fits and `head_hidden` only
/// for fits with neural heads; both are carried here so one config type can
/// describe any run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Number of components.
    pub rank: usize,
    /// Adam step size.
    pub learning_rate: f64,
    /// Maximum number of epochs.
    pub epochs: usize,
    /// Entries per mini-batch.
    pub batch_size: usize,
    /// Seed for initialization and shuffling.
    pub seed: u64,
    /// Weight of the second tensor's residuals in a coupled loss.
    pub coupling_weight: f64,
    /// Consecutive epochs without improvement before stopping.
    pub early_stop_patience: usize,
    /// Minimum RMSE improvement that counts as progress.
    pub early_stop_delta: f64,
    /// Map from raw parameters to nonnegative factors and weights.
    pub nonneg_map: NonnegMap,
    /// Hidden-layer widths of per-component heads; empty means each head is
    /// a single affine layer.
    pub head_hidden: Vec<usize>,
}

impl TrainConfig {
    /// Config with the default hyperparameters for a given rank and seed:
    /// learning rate 0.01, 500 epochs, batch size 1024, coupling weight 1,
    /// patience 10, delta 1e-6, softplus map, affine heads.
    pub fn new(rank: usize, seed: u64) -> Self {
        TrainConfig {
            rank,
            learning_rate: 0.01,
            epochs: 500,
            batch_size: 1024,
            seed,
            coupling_weight: 1.0,
            early_stop_patience: 10,
            early_stop_delta: 1e-6,
            nonneg_map: NonnegMap::Softplus,
            head_hidden: Vec::new(),
        }
    }

    pub(crate) fn check(&self) -> Result<(), FitError> {
        let mut problems = Vec::new();
        if self.rank == 0 {
            problems.push("rank must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push("learning_rate must be positive and finite");
        }
        if self.epochs == 0 {
            problems.push("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be at least 1");
        }
        if !(self.coupling_weight >= 0.0 && self.coupling_weight.is_finite()) {
            problems.push("coupling_weight must be nonnegative and finite");
        }
        if self.early_stop_patience == 0 {
            problems.push("early_stop_patience must be at least 1");
        }
        if self.early_stop_delta.is_nan() || self.early_stop_delta < 0.0 {
            problems.push("early_stop_delta must be nonnegative");
        }
        if self.head_hidden.contains(&0) {
            problems.push("head_hidden widths must be at least 1");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(FitError::InvalidConfig(problems.join("; ")))
        }
    }
}

/// Train RMSE at one epoch. Epoch 0 records the RMSE of the freshly
/// initialized model, before any update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub train_rmse: f64,
}

/// What a fit did: per-epoch train RMSE and how the run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub seed: u64,
    pub final_train_rmse: f64,
    pub stopped_early: bool,
    pub epochs_run: usize,
    pub epoch_history: Vec<EpochStat>,
}

#[derive(Debug, thiserror::Error)]
pub enum FitError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training tensor `{name}` has no entries")]
    EmptyTensor { name: String },
    #[error("tensors disagree on shared modes: {0}")]
    ShapeMismatch(String),
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, report: FitReport },
}

/// Objective trainable by [`run_fit`]: a flat parameter vector plus
/// entry-level residual gradients.
///
/// The training stream is the fixed list of observed entries (for coupled
/// objectives, X entries followed by Y entries); `entry_grad` must add
/// `scale` times the gradient of that entry's weighted squared residual.
pub(crate) trait Trainable {
    fn param_len(&self) -> usize;
    /// Deterministic initial parameters for a seed (stream 0 of the
    /// generator; the shuffle stream is separate).
    fn init_flat(&self, seed: u64) -> Vec<f64>;
    fn entry_count(&self) -> usize;
    fn entry_grad(&self, params: &[f64], entry: usize, scale: f64, grad: &mut [f64]);
    /// Sum of weighted squared residuals over all entries, and the sum of
    /// weights (the effective entry count).
    fn weighted_sse(&self, params: &[f64]) -> (f64, f64);
}

/// Gradient of the full weighted sum of squared residuals.
pub(crate) fn full_grad<T: Trainable>(problem: &T, params: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; problem.param_len()];
    for entry in 0..problem.entry_count() {
        problem.entry_grad(params, entry, 1.0, &mut grad);
    }
    grad
}

pub(crate) fn train_rmse<T: Trainable>(problem: &T, params: &[f64]) -> f64 {
    let (sse, weight) = problem.weighted_sse(params);
    (sse / weight).sqrt()
}

/// Fresh generator for parameter initialization under `seed`.
pub(crate) fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

/// Draws `n` samples from Normal(0, std) in order.
pub(crate) fn draw_normal(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, std).expect("std must be finite and nonnegative");
    (0..n).map(|_| normal.sample(rng)).collect()
}

/// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8) and
/// bias-corrected moment estimates.
pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub(crate) fn new(lr: f64, n: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bias1 = 1.0 - self.beta1.powi(self.t);
        let bias2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Runs the shared training loop, starting from `problem.init_flat(seed)`.
pub(crate) fn run_fit<T: Trainable>(
    problem: &T,
    config: &TrainConfig,
) -> Result<(Vec<f64>, FitReport), FitError> {
    let params = problem.init_flat(config.seed);
    run_fit_from(problem, config, params)
}

/// Runs the shared training loop from explicit initial parameters (used for
/// warm starts). The shuffle stream still comes from `config.seed`.
pub(crate) fn run_fit_from<T: Trainable>(
    problem: &T,
    config: &TrainConfig,
    mut params: Vec<f64>,
) -> Result<(Vec<f64>, FitReport), FitError> {
    config.check()?;
    assert_eq!(params.len(), problem.param_len());
    let n = problem.entry_count();

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);

    let mut adam = Adam::new(config.learning_rate, params.len());
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; params.len()];

    let mut history = Vec::with_capacity(config.epochs + 1);
    let report = |history: &[EpochStat], stopped_early: bool| FitReport {
        seed: config.seed,
        final_train_rmse: history.last().map_or(f64::NAN, |s| s.train_rmse),
        stopped_early,
        epochs_run: history.last().map_or(0, |s| s.epoch),
        epoch_history: history.to_vec(),
    };

    let initial = train_rmse(problem, &params);
    if !initial.is_finite() {
        return Err(FitError::NonFiniteLoss {
            epoch: 0,
            report: report(&history, false),
        });
    }
    history.push(EpochStat {
        epoch: 0,
        train_rmse: initial,
    });

    let mut best = initial;
    let mut stalled = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            grad.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &entry in batch {
                problem.entry_grad(&params, entry, scale, &mut grad);
            }
            adam.step(&mut params, &grad);
        }

        let current = train_rmse(problem, &params);
        if !current.is_finite() {
            return Err(FitError::NonFiniteLoss {
                epoch,
                report: report(&history, false),
            });
        }
        history.push(EpochStat {
            epoch,
            train_rmse: current,
        });

        if best - current < config.early_stop_delta {
            stalled += 1;
            if stalled >= config.early_stop_patience {
                stopped_early = true;
            }
        } else {
            stalled = 0;
        }
        if current < best {
            best = current;
        }
        if stopped_early {
            break;
        }
    }

    Ok((params, report(&history, stopped_early)))
}
