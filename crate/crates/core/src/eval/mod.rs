//! Accuracy reports, test-distribution weighting, repeated runs and
//! cross-validation.

mod cv;
mod metrics;
mod runs;

pub use cv::{cross_validate, fold_class_counts, stratified_folds, CrossValidation};
pub use metrics::{evaluate, split_labels, weighted_accuracy, EvalReport};
pub use runs::{repeated_runs, RunStatistics};
