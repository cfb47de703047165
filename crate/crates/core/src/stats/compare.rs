use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::utest::{mann_whitney_u, UTestMode, UTestResult};
use super::StatsError;
use crate::model::{validate_experiment_pair, ExperimentResults, Metric, PairValidation};

/// Significance level used throughout the bug study.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Whether [`compare_experiments`] insists on a well-formed pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairCheck {
    #[default]
    Require,
    /// Compare even though the specs differ in more than type and artifact.
    Override,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub bug_id: String,
    pub alpha: f64,
    /// Runs compared per side after truncation.
    pub compared_runs: u32,
    pub buggy_runs: u32,
    pub corrected_runs: u32,
    /// Either side finished fewer runs than planned.
    pub dagger: bool,
    pub tests: BTreeMap<Metric, UTestResult>,
    pub significant: BTreeSet<Metric>,
}

/// Runs a U-test per metric on the first `k = min(completed runs)` runs of
/// each side (ascending run index).
pub fn compare_experiments(
    buggy: &ExperimentResults,
    corrected: &ExperimentResults,
    alpha: f64,
    check: PairCheck,
) -> Result<Comparison, StatsError> {
    if check == PairCheck::Require {
        if let PairValidation::Mismatch(fields) = validate_experiment_pair(&buggy.spec, &corrected.spec) {
            return Err(StatsError::PairMismatch(fields));
        }
    }
    let k = buggy.runs.len().min(corrected.runs.len());
    if k == 0 {
        return Err(StatsError::InsufficientData(format!(
            "{} has {} runs and {} has {}",
            buggy.spec.key(),
            buggy.runs.len(),
            corrected.spec.key(),
            corrected.runs.len()
        )));
    }
    let truncated = |r: &ExperimentResults, m: Metric| -> Vec<f64> {
        let mut runs = r.runs.clone();
        runs.sort_by_key(|r| r.run_index);
        runs.iter().take(k).map(|run| run.get(m)).collect()
    };
    let mut tests = BTreeMap::new();
    let mut significant = BTreeSet::new();
    for m in Metric::ALL {
        let result = mann_whitney_u(&truncated(buggy, m), &truncated(corrected, m), UTestMode::Auto)?;
        if result.p_value < alpha {
            significant.insert(m);
        }
        tests.insert(m, result);
    }
    Ok(Comparison {
        bug_id: buggy.spec.bug_identifier.clone(),
        alpha,
        compared_runs: k as u32,
        buggy_runs: buggy.completed_runs,
        corrected_runs: corrected.completed_runs,
        dagger: buggy.is_incomplete() || corrected.is_incomplete(),
        tests,
        significant,
    })
}
