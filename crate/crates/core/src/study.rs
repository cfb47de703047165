//! Bug-study layer: corpus filtering, buggy/corrected pairing and p-value
//! reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ExperimentResults, Metric};
use crate::record::{self, dec_f64, dec_u64};
use crate::stats::{compare_experiments, PairCheck, StatsError};

#[derive(Debug, Error, PartialEq)]
pub enum StudyError {
    #[error("invalid bug record {bug_id:?}: {reason}")]
    InvalidRecord { bug_id: String, reason: String },
    #[error("unknown report format {0:?} (expected text-table, csv or records)")]
    InvalidFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectionCode {
    CompileError,
    RuntimeCrash,
    UserCode,
    CpuOnly,
    NoAffectedApp,
}

impl RejectionCode {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectionCode::CompileError => "COMPILE_ERROR",
            RejectionCode::RuntimeCrash => "RUNTIME_CRASH",
            RejectionCode::UserCode => "USER_CODE",
            RejectionCode::CpuOnly => "CPU_ONLY",
            RejectionCode::NoAffectedApp => "NO_AFFECTED_APP",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FavourTag {
    Gradients,
    MathFunctions,
}

impl FavourTag {
    pub fn as_str(self) -> &'static str {
        match self {
            FavourTag::Gradients => "GRADIENTS",
            FavourTag::MathFunctions => "MATH_FUNCTIONS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Collected,
    Filtered,
    Built,
    Evaluated,
}

/// One framework bug: the last revision containing it and the fixing one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugRecord {
    pub bug_id: String,
    pub pr_number: u64,
    pub buggy_revision: String,
    pub corrected_revision: String,
    /// In listed order; the first code decides the rejection bucket.
    #[serde(default)]
    pub rejection_codes: Vec<RejectionCode>,
    #[serde(default)]
    pub favour_tags: BTreeSet<FavourTag>,
    pub stage: Stage,
}

impl BugRecord {
    pub fn validate(&self) -> Result<(), StudyError> {
        let invalid = |reason: &str| StudyError::InvalidRecord { bug_id: self.bug_id.clone(), reason: reason.into() };
        if self.bug_id.is_empty() {
            return Err(invalid("empty bug_id"));
        }
        if self.buggy_revision == self.corrected_revision {
            return Err(invalid("buggy and corrected revisions must differ"));
        }
        if !self.rejection_codes.is_empty() && self.stage > Stage::Collected {
            return Err(invalid("a rejected record cannot advance past collected"));
        }
        Ok(())
    }
}

/// Parses and validates a corpus file (one record per line).
pub fn parse_corpus(text: &str) -> Result<Vec<BugRecord>, StudyError> {
    let records: Vec<BugRecord> = record::decode_lines(text)
        .map_err(|e| StudyError::InvalidRecord { bug_id: String::new(), reason: e.to_string() })?;
    records.iter().try_for_each(BugRecord::validate)?;
    Ok(records)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    /// Favour-tagged records first, each group in input order.
    pub accepted: Vec<BugRecord>,
    pub rejected: BTreeMap<RejectionCode, Vec<BugRecord>>,
}

/// Rejects every record carrying a rejection code (grouped by its first
/// code) and ranks favour-tagged accepted records ahead of the rest.
pub fn filter_corpus(records: Vec<BugRecord>) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for rec in records {
        match rec.rejection_codes.first() {
            Some(&code) => out.rejected.entry(code).or_default().push(rec),
            None => out.accepted.push(rec),
        }
    }
    // Stable: input order is kept within each group.
    out.accepted.sort_by_key(|r| r.favour_tags.is_empty());
    out
}

/// Record counts at each step of corpus construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusFunnel {
    #[serde(with = "dec_u64")]
    pub collected: u64,
    /// Free of every rejection criterion.
    #[serde(with = "dec_u64")]
    pub filtered: u64,
    /// Filtered and carrying at least one favour tag.
    #[serde(with = "dec_u64")]
    pub favoured: u64,
    #[serde(with = "dec_u64")]
    pub built: u64,
    #[serde(with = "dec_u64")]
    pub evaluated: u64,
}

impl CorpusFunnel {
    pub fn of(records: &[BugRecord]) -> Self {
        let count = |f: &dyn Fn(&BugRecord) -> bool| records.iter().filter(|r| f(r)).count() as u64;
        CorpusFunnel {
            collected: records.len() as u64,
            filtered: count(&|r| r.rejection_codes.is_empty()),
            favoured: count(&|r| r.rejection_codes.is_empty() && !r.favour_tags.is_empty()),
            built: count(&|r| r.stage >= Stage::Built),
            evaluated: count(&|r| r.stage == Stage::Evaluated),
        }
    }

    /// Each step keeps a subset of the previous one.
    pub fn is_monotone(&self) -> bool {
        self.collected >= self.filtered
            && self.filtered >= self.favoured
            && self.favoured >= self.built
            && self.built >= self.evaluated
    }
}

/// A buggy/corrected pair submitted for comparison.
#[derive(Debug, Clone)]
pub struct ExperimentPair {
    pub buggy: ExperimentResults,
    pub corrected: ExperimentResults,
    pub check: PairCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub bug_id: String,
    #[serde(default, with = "opt_dec_f64")]
    pub p_accuracy: Option<f64>,
    #[serde(default, with = "opt_dec_f64")]
    pub p_precision: Option<f64>,
    #[serde(default, with = "opt_dec_f64")]
    pub p_recall: Option<f64>,
    #[serde(default, with = "opt_dec_f64")]
    pub p_f1: Option<f64>,
    #[serde(default)]
    pub dagger: bool,
    #[serde(default)]
    pub significant_metrics: BTreeSet<Metric>,
    /// Why the row has no p-values, when it has none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

mod opt_dec_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => super::dec_f64::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| crate::record::parse_decimal(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

impl ReportRow {
    pub fn p_value(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Accuracy => self.p_accuracy,
            Metric::Precision => self.p_precision,
            Metric::Recall => self.p_recall,
            Metric::F1 => self.p_f1,
        }
    }

    fn with_flags(mut self, alpha: f64) -> Self {
        self.significant_metrics =
            Metric::ALL.into_iter().filter(|&m| self.p_value(m).is_some_and(|p| p < alpha)).collect();
        self
    }

    pub fn all_significant(&self) -> bool {
        self.significant_metrics.len() == Metric::ALL.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    #[serde(with = "dec_f64")]
    pub alpha: f64,
    /// Sorted by `bug_id`.
    pub rows: Vec<ReportRow>,
}

impl ComparisonReport {
    /// Builds a report from already computed p-values (for example a
    /// published table), recomputing the significance flags at `alpha`.
    pub fn from_p_values(rows: Vec<ReportRow>, alpha: f64) -> Self {
        let mut rows: Vec<ReportRow> = rows.into_iter().map(|r| r.with_flags(alpha)).collect();
        rows.sort_by(|a, b| a.bug_id.cmp(&b.bug_id));
        ComparisonReport { alpha, rows }
    }

    pub fn significant_everywhere(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.all_significant())
    }
}

/// Compares every pair; a pair that cannot be compared still gets a row
/// carrying the error.
pub fn build_report(pairs: &[ExperimentPair], alpha: f64) -> ComparisonReport {
    let rows = pairs
        .iter()
        .map(|pair| match compare_experiments(&pair.buggy, &pair.corrected, alpha, pair.check) {
            Ok(cmp) => {
                let p = |m| cmp.tests.get(&m).map(|t| t.p_value);
                ReportRow {
                    bug_id: cmp.bug_id.clone(),
                    p_accuracy: p(Metric::Accuracy),
                    p_precision: p(Metric::Precision),
                    p_recall: p(Metric::Recall),
                    p_f1: p(Metric::F1),
                    dagger: cmp.dagger,
                    significant_metrics: BTreeSet::new(),
                    error: None,
                }
            }
            Err(e) => ReportRow {
                bug_id: pair.buggy.spec.bug_identifier.clone(),
                p_accuracy: None,
                p_precision: None,
                p_recall: None,
                p_f1: None,
                dagger: pair.buggy.is_incomplete() || pair.corrected.is_incomplete(),
                significant_metrics: BTreeSet::new(),
                error: Some(match e {
                    StatsError::InsufficientData(_) => format!("insufficient data: {e}"),
                    other => other.to_string(),
                }),
            },
        })
        .collect();
    ComparisonReport::from_p_values(rows, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    TextTable,
    Csv,
    Records,
}

impl FromStr for ReportFormat {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text-table" => Ok(ReportFormat::TextTable),
            "csv" => Ok(ReportFormat::Csv),
            "records" => Ok(ReportFormat::Records),
            other => Err(StudyError::InvalidFormat(other.to_string())),
        }
    }
}

pub const DAGGER: char = '†';

fn label(row: &ReportRow) -> String {
    if row.dagger {
        format!("{}{DAGGER}", row.bug_id)
    } else {
        row.bug_id.clone()
    }
}

fn p_cell(p: Option<f64>) -> String {
    p.map_or_else(|| "n/a".to_string(), |p| format!("{p:.5}"))
}

/// Renders a report. p-values use 5 decimals; in the text table, values
/// below alpha are wrapped in `**`.
pub fn render_report(report: &ComparisonReport, format: ReportFormat) -> Vec<u8> {
    let mut out = String::new();
    match format {
        ReportFormat::TextTable => {
            let header = ["bug", "accuracy", "precision", "recall", "f1"];
            let mut cells: Vec<[String; 5]> = vec![header.map(String::from)];
            for row in &report.rows {
                let cell = |m: Metric| {
                    let text = p_cell(row.p_value(m));
                    if row.significant_metrics.contains(&m) {
                        format!("**{text}**")
                    } else {
                        text
                    }
                };
                cells.push([label(row), cell(Metric::Accuracy), cell(Metric::Precision), cell(Metric::Recall), cell(Metric::F1)]);
            }
            let widths: Vec<usize> =
                (0..5).map(|c| cells.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
            for (i, row) in cells.iter().enumerate() {
                let line: Vec<String> = row
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(c, (text, &w))| {
                        let pad = " ".repeat(w - text.chars().count());
                        if c == 0 {
                            format!("{text}{pad}")
                        } else {
                            format!("{pad}{text}")
                        }
                    })
                    .collect();
                writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
                if i == 0 {
                    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
                    writeln!(out, "{}", rule.join("  ")).unwrap();
                }
            }
            writeln!(out, "alpha = {}", report.alpha).unwrap();
        }
        ReportFormat::Csv => {
            writeln!(out, "bug_id,accuracy,precision,recall,f1,significant").unwrap();
            for row in &report.rows {
                let sig: Vec<&str> = row.significant_metrics.iter().map(|m| m.name()).collect();
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    label(row),
                    p_cell(row.p_accuracy),
                    p_cell(row.p_precision),
                    p_cell(row.p_recall),
                    p_cell(row.p_f1),
                    sig.join(";")
                )
                .unwrap();
            }
        }
        ReportFormat::Records => {
            for row in &report.rows {
                writeln!(out, "{}", record::encode(row)).unwrap();
            }
        }
    }
    out.into_bytes()
}
