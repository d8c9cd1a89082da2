//! Fact accuracy, memorization lower bounds, exposures, calibration and
//! usage statistics.

pub mod accuracy;
pub mod bounds;
pub mod report;
pub mod stats;

pub use accuracy::{fact_accuracy, score_facts, span_accuracy, weighted_fact_accuracy, FactAccuracy, FactScores};
pub use bounds::{exposures, fano_bound, mem_bits_lower_bound, MemBound};
pub use report::{evaluate, evaluate_annotated, read_evals_csv, EvalReport, EVALS_HEADER};
pub use stats::{
    convergence_point, entropy_median_estimate, median, spearman, usage_histogram, usage_from_facts, Spearman,
};
