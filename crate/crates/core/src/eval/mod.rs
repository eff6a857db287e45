//! Scoring and study harness.

mod metrics;
mod study;

pub use metrics::{
    brier_score, calibration_deciles, confidence_split, decompose, decompose_with, uncertainty_distribution, Binning,
    DecilePoint, Decomposition, EvaluationReport, ScoredCase, UncertaintyDistribution, HISTOGRAM_BINS,
};
pub use study::{
    cases, feature_importance_study, misclassification_by_step, replay, taqf_subsets, Condition, ImportanceRow,
    StepRate, StepTrace, UfChoice,
};
