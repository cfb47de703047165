use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::model::{ExperimentResults, Metric};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor `N − 1`); absent for a single run.
    pub std: Option<f64>,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveSummary {
    pub experiment_key: String,
    pub metrics: BTreeMap<Metric, MetricSummary>,
}

pub fn summarize(values: &[f64]) -> Result<MetricSummary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::InsufficientData("no runs".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(MetricSummary { count: values.len(), mean, std, min, max })
}

pub fn descriptive(results: &ExperimentResults) -> Result<DescriptiveSummary, StatsError> {
    if results.runs.is_empty() {
        return Err(StatsError::InsufficientData(format!("{} has no completed runs", results.spec.key())));
    }
    let metrics = Metric::ALL
        .iter()
        .map(|&m| Ok((m, summarize(&results.values(m))?)))
        .collect::<Result<_, StatsError>>()?;
    Ok(DescriptiveSummary { experiment_key: results.spec.key(), metrics })
}
