//! Timeseries-aware uncertainty wrappers for black-box classifiers.
//!
//! A stateless wrapper attaches a calibrated failure probability to every
//! classifier outcome using a decision tree over input quality factors.
//! The timeseries-aware wrapper fuses successive outcomes of one object by
//! majority vote and estimates the uncertainty of the fused outcome from
//! the current quality factors plus features of the series so far.
//!
//! Modules:
//! - [`dataset`]: domain types, validation, JSON Lines I/O
//! - [`qim`]: CART fitting, calibration pruning, Clopper-Pearson bounds
//! - [`fusion`]: majority vote and baseline uncertainty fusion rules
//! - [`wrapper`]: per-series buffer and timeseries-aware features
//! - [`eval`]: Brier decomposition, calibration plots, study harness
//! - [`simgen`]: synthetic benchmark generator
//! - [`pipeline`]: fitting both models end to end

pub mod dataset;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod pipeline;
pub mod qim;
pub mod simgen;
pub mod wrapper;

pub use dataset::{
    validate_dataset, ClassLabel, Dataset, LabelId, QfKind, QfSpec, QfValue, QualityFactorVector, Split, StepRecord,
    Timeseries, Violation,
};
pub use error::{Error, Result};
pub use eval::{EvaluationReport, ScoredCase};
pub use fusion::{majority_vote, FusedOutcome, UfRule};
pub use pipeline::{fit_models, PipelineConfig, WrapperModels};
pub use qim::{CalibratedTree, QimConfig, Sample, TreeNode};
pub use simgen::{generate, simulate, ScenarioConfig, SimulatedSplits};
pub use wrapper::{TaqfKind, TaqfVector, TimeseriesBuffer, WrapperStepResult};
