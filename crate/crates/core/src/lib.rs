//! Coupled tensor decomposition and autoregressive labeling for fear
//! conditioning experiments.
//!
//! The crate covers the full pipeline:
//!
//! * [`prep`] turns per-second behavior labels into binary tensors,
//!   rebalances zeros, and splits observed entries for evaluation.
//! * [`tensor`] holds sparse COO tensors and multilinear CP models with
//!   non-negativity enforced through softplus or ReLU maps.
//! * [`cpd`] fits single and coupled CP decompositions with seeded
//!   minibatch Adam; [`neat`] replaces the multilinear product with
//!   small per-component networks while keeping the additive structure.
//! * [`sequencer`] drives chunk-by-chunk labeling with in-context
//!   examples and autoregressive label threading, with traces and
//!   audits of the causal contract.
//! * [`metrics`] scores label agreement (F-beta, macro F1, balanced
//!   accuracy, MCC, quadratic-weighted kappa) and grid reconstructions.
//!
//! Every seeded entry point is deterministic: the same inputs and seeds
//! produce bit-identical models, splits, and traces.

pub mod cpd;
pub mod error;
pub mod gradcheck;
pub mod matrix;
pub mod metrics;
pub mod neat;
pub mod prep;
pub mod sequencer;
pub mod tensor;
mod train;

pub use cpd::{
    coupled_cp_loss, fit_coupled_cp, fit_cp, fit_cp_warm, rank_components, ComponentImportance,
    CoupledCpObjective, CpObjective,
};
pub use error::ParseError;
pub use matrix::Matrix;
pub use metrics::{
    matrix_score, quadratic_weighted_kappa, read_score_pairs_csv, ConfusionMatrix, MetricsError,
    ScorePair,
};
pub use neat::{
    fit_coupled_neat, fit_neat, identify_components, ComponentHead, ComponentTag, CoupledNeatModel,
    CoupledNeatObjective, HeadLayer, NeatError, NeatModel, NeatObjective,
    DEFAULT_ACTIVITY_THRESHOLD,
};
pub use prep::{
    behavior_to_matrix, behavior_to_one_hot, class_distribution, grid_binarize, read_event_csv,
    read_label_csv, sample_zeros, split, BehaviorLabel, ClassStat, GridActivity, LabelSequence,
    PrepError, SplitSpec,
};
pub use sequencer::{
    assemble_context, assemble_context_with, audit_trace, evaluate_run, read_chunk_manifest,
    read_examples_manifest, read_trace_jsonl, run_sequence, run_sequence_with, write_trace_jsonl,
    Chunk, CommandLabeler, ContextOptions, Decision, EvalReport, ExampleSet, HashRuleLabeler,
    LabeledChunk, Labeler, LabelerError, Mode, PrevContext, PromptContext, RunOutput,
    ScriptedLabeler, SequencerError, TraceRecord,
};
pub use tensor::{rmse, CoupledCpModel, CpModel, NonnegMap, SparseTensor, TensorError, TensorSlot};
pub use train::{EpochStat, FitError, FitReport, TrainConfig};
