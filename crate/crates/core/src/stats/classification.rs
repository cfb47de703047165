use super::StatsError;
use crate::model::RunMetrics;

/// Macro-averaged scores of one confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MacroScores {
    pub fn into_run(self, run_index: u32) -> RunMetrics {
        RunMetrics { run_index, accuracy: self.accuracy, precision: self.precision, recall: self.recall, f1: self.f1 }
    }
}

/// Unweighted per-class means of one-vs-rest accuracy, precision, recall
/// and F1. Rows are true classes, columns predicted classes. A zero
/// denominator scores 0 for that class.
pub fn macro_metrics<R: AsRef<[u64]>>(confusion: &[R]) -> Result<MacroScores, StatsError> {
    let k = confusion.len();
    if k < 2 {
        return Err(StatsError::InvalidConfusion(format!("need at least 2 classes, got {k}")));
    }
    if let Some((i, row)) = confusion.iter().enumerate().find(|(_, r)| r.as_ref().len() != k) {
        return Err(StatsError::InvalidConfusion(format!("row {i} has {} columns, expected {k}", row.as_ref().len())));
    }
    let cell = |i: usize, j: usize| confusion[i].as_ref()[j] as f64;
    let total: f64 = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| cell(i, j)).sum();
    if total == 0.0 {
        return Err(StatsError::InvalidConfusion("matrix has no observations".into()));
    }
    let ratio = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };

    let mut sums = [0.0f64; 4];
    for c in 0..k {
        let tp = cell(c, c);
        let actual: f64 = (0..k).map(|j| cell(c, j)).sum();
        let predicted: f64 = (0..k).map(|i| cell(i, c)).sum();
        let (fn_, fp) = (actual - tp, predicted - tp);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = ratio(2.0 * precision * recall, precision + recall);
        let accuracy = (total - fn_ - fp) / total;
        for (s, v) in sums.iter_mut().zip([accuracy, precision, recall, f1]) {
            *s += v;
        }
    }
    let k = k as f64;
    Ok(MacroScores { accuracy: sums[0] / k, precision: sums[1] / k, recall: sums[2] / k, f1: sums[3] / k })
}
