//! Classification metrics, descriptive statistics and the U-test used to
//! compare buggy and corrected experiments.

use thiserror::Error;

mod classification;
mod compare;
mod descriptive;
mod utest;

pub use classification::{macro_metrics, MacroScores};
pub use compare::{compare_experiments, Comparison, PairCheck, DEFAULT_ALPHA};
pub use descriptive::{descriptive, summarize, DescriptiveSummary, MetricSummary};
pub use utest::{
    erfc, exact_p_value, mann_whitney_u, normal_cdf, rank_with_ties, u_distribution, UTestMethod, UTestMode,
    UTestResult, EXACT_MAX_N,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StatsError {
    #[error("invalid confusion matrix: {0}")]
    InvalidConfusion(String),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("exact test unavailable for n1 = {n1}, n2 = {n2} (cross-sample ties: {cross_ties})")]
    ExactUnavailable { n1: usize, n2: usize, cross_ties: bool },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("experiments are not a valid pair; mismatched: {}", .0.join(", "))]
    PairMismatch(Vec<String>),
}
