//! Shared domain types: experiments, challenges, runs and their metrics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::record::{self, dec_f64, dec_u64, Digest};

/// Runs per experiment used throughout the bug study.
pub const DEFAULT_PLANNED_RUNS: u32 = 50;
/// Training epochs per run used throughout the bug study.
pub const DEFAULT_EPOCHS: u32 = 30;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("bug_identifier must be non-empty")]
    EmptyBugIdentifier,
    #[error("{0} must be at least 1")]
    NonPositive(&'static str),
    #[error("metric {name} = {value} is outside [0, 1]")]
    MetricOutOfRange { name: &'static str, value: f64 },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("invalid train fraction: {0}")]
    InvalidFraction(String),
    #[error("invalid results: {0}")]
    InvalidResults(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluationType {
    Buggy,
    Corrected,
}

impl EvaluationType {
    pub fn as_str(self) -> &'static str {
        match self {
            EvaluationType::Buggy => "buggy",
            EvaluationType::Corrected => "corrected",
        }
    }
}

impl fmt::Display for EvaluationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvaluationType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "buggy" => Ok(EvaluationType::Buggy),
            "corrected" => Ok(EvaluationType::Corrected),
            other => Err(format!("unknown evaluation type {other:?}")),
        }
    }
}

/// Identity and attributes of one experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub bug_identifier: String,
    pub evaluation_type: EvaluationType,
    pub model: String,
    pub challenge: String,
    /// Declared random state. The server's root seed is authoritative for
    /// everything it serves; this value only participates in pairing checks.
    #[serde(with = "dec_u64")]
    pub state: u64,
    pub artifact: String,
    pub software: String,
    pub epochs: u32,
    pub planned_runs: u32,
}

impl ExperimentSpec {
    /// `"<bug_identifier>/<evaluation_type>"`, unique within a server.
    pub fn key(&self) -> String {
        format!("{}/{}", self.bug_identifier, self.evaluation_type)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.bug_identifier.is_empty() {
            return Err(ModelError::EmptyBugIdentifier);
        }
        if self.epochs == 0 {
            return Err(ModelError::NonPositive("epochs"));
        }
        if self.planned_runs == 0 {
            return Err(ModelError::NonPositive("planned_runs"));
        }
        Ok(())
    }
}

/// Outcome of [`validate_experiment_pair`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairValidation {
    Ok,
    Mismatch(Vec<String>),
}

impl PairValidation {
    pub fn is_ok(&self) -> bool {
        matches!(self, PairValidation::Ok)
    }
}

/// Checks that two experiments differ only in evaluation type and artifact.
pub fn validate_experiment_pair(buggy: &ExperimentSpec, corrected: &ExperimentSpec) -> PairValidation {
    let mut mismatches = Vec::new();
    if buggy.evaluation_type == corrected.evaluation_type {
        mismatches.push("evaluation_type must differ".to_string());
    }
    let checks: [(&str, bool); 6] = [
        ("bug_identifier", buggy.bug_identifier == corrected.bug_identifier),
        ("model", buggy.model == corrected.model),
        ("challenge", buggy.challenge == corrected.challenge),
        ("state", buggy.state == corrected.state),
        ("software", buggy.software == corrected.software),
        ("epochs", buggy.epochs == corrected.epochs),
    ];
    mismatches.extend(checks.iter().filter(|(_, eq)| !eq).map(|(name, _)| name.to_string()));
    if mismatches.is_empty() {
        PairValidation::Ok
    } else {
        PairValidation::Mismatch(mismatches)
    }
}

/// Fraction of a challenge's items assigned to training, kept exact so the
/// train size `ceil(fraction * n)` never depends on float rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainFraction {
    numerator: u64,
    denominator: u64,
}

impl TrainFraction {
    pub fn new(numerator: u64, denominator: u64) -> Result<Self, ModelError> {
        if numerator == 0 || denominator == 0 || numerator >= denominator {
            return Err(ModelError::InvalidFraction(format!("{numerator}/{denominator} is not in (0, 1)")));
        }
        let g = gcd(numerator, denominator);
        Ok(TrainFraction { numerator: numerator / g, denominator: denominator / g })
    }

    /// `ceil(fraction * n)`.
    pub fn train_len(&self, n: usize) -> usize {
        let prod = self.numerator as u128 * n as u128;
        prod.div_ceil(self.denominator as u128) as usize
    }

    pub fn as_f64(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl fmt::Display for TrainFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

impl FromStr for TrainFraction {
    type Err = ModelError;

    /// Accepts `"num/den"` or a plain decimal such as `"0.8"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::InvalidFraction(format!("{s:?}"));
        if let Some((n, d)) = s.split_once('/') {
            return TrainFraction::new(n.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?);
        }
        let (int, frac) = s.split_once('.').ok_or_else(bad)?;
        if int != "0" || frac.is_empty() || frac.len() > 18 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        TrainFraction::new(frac.parse().map_err(|_| bad())?, 10u64.pow(frac.len() as u32))
    }
}

impl Serialize for TrainFraction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TrainFraction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A dataset ("challenge") as the server knows it: one content digest per
/// item in canonical order. Clients hold the items and verify the digests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeManifest {
    pub challenge_id: String,
    pub item_count: u64,
    pub item_digests: Vec<Digest>,
    pub train_fraction: TrainFraction,
}

impl ChallengeManifest {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.challenge_id.is_empty() {
            return Err(ModelError::InvalidManifest("empty challenge_id".into()));
        }
        if self.item_digests.len() as u64 != self.item_count {
            return Err(ModelError::InvalidManifest(format!(
                "item_count {} but {} digests",
                self.item_count,
                self.item_digests.len()
            )));
        }
        let n = self.item_digests.len();
        if n >= 2 {
            let train = self.train_fraction.train_len(n);
            if train < 1 || n - train < 1 {
                return Err(ModelError::InvalidManifest(format!(
                    "fraction {} leaves an empty subset for n = {n}",
                    self.train_fraction
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical encoding; binds a served split to the exact
    /// manifest it was computed from.
    pub fn digest(&self) -> Digest {
        Digest::of(record::encode(self).as_bytes())
    }

    /// A manifest whose item digests are `SHA-256("<id>/<index>")`, for tests
    /// and demos without a real dataset.
    pub fn synthetic(challenge_id: &str, items: u64, train_fraction: TrainFraction) -> Self {
        let item_digests = (0..items)
            .map(|i| Digest::of(format!("{challenge_id}/{i}").as_bytes()))
            .collect();
        ChallengeManifest { challenge_id: challenge_id.to_string(), item_count: items, item_digests, train_fraction }
    }
}

/// The four end-of-run test-set metrics of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_index: u32,
    #[serde(with = "dec_f64")]
    pub accuracy: f64,
    #[serde(with = "dec_f64")]
    pub precision: f64,
    #[serde(with = "dec_f64")]
    pub recall: f64,
    #[serde(with = "dec_f64")]
    pub f1: f64,
}

impl RunMetrics {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in Metric::ALL.iter().map(|m| (m.name(), self.get(*m))) {
            if !(0.0..=1.0).contains(&value) {
                return Err(ModelError::MetricOutOfRange { name, value });
            }
        }
        Ok(())
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::F1 => self.f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Precision,
    Recall,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Accuracy, Metric::Precision, Metric::Recall, Metric::F1];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// All runs collected for one experiment, ordered by run index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub spec: ExperimentSpec,
    pub runs: Vec<RunMetrics>,
    pub completed_runs: u32,
}

impl ExperimentResults {
    /// Sorts `runs` by index and fills in `completed_runs`.
    pub fn new(spec: ExperimentSpec, mut runs: Vec<RunMetrics>) -> Result<Self, ModelError> {
        runs.sort_by_key(|r| r.run_index);
        if runs.windows(2).any(|w| w[0].run_index == w[1].run_index) {
            return Err(ModelError::InvalidResults("duplicate run_index".into()));
        }
        for run in &runs {
            run.validate()?;
        }
        let completed_runs = runs.len() as u32;
        Ok(ExperimentResults { spec, runs, completed_runs })
    }

    /// Runs still missing with respect to `planned_runs`.
    pub fn shortfall(&self) -> u32 {
        self.spec.planned_runs.saturating_sub(self.completed_runs)
    }

    pub fn is_incomplete(&self) -> bool {
        self.shortfall() > 0
    }

    pub fn values(&self, metric: Metric) -> Vec<f64> {
        self.runs.iter().map(|r| r.get(metric)).collect()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn spec(bug: &str, t: EvaluationType) -> ExperimentSpec {
        ExperimentSpec {
            bug_identifier: bug.into(),
            evaluation_type: t,
            model: "vgg-x".into(),
            challenge: "cifar-10".into(),
            state: 1,
            artifact: match t {
                EvaluationType::Buggy => "rev-a".into(),
                EvaluationType::Corrected => "rev-b".into(),
            },
            software: "py3.7.9".into(),
            epochs: DEFAULT_EPOCHS,
            planned_runs: DEFAULT_PLANNED_RUNS,
        }
    }

    #[test]
    fn pair_differing_only_in_type_and_artifact_is_ok() {
        let b = spec("study-pr31433", EvaluationType::Buggy);
        let c = spec("study-pr31433", EvaluationType::Corrected);
        assert_eq!(validate_experiment_pair(&b, &c), PairValidation::Ok);
    }

    #[test]
    fn pair_with_different_state_reports_state() {
        let b = spec("x", EvaluationType::Buggy);
        let mut c = spec("x", EvaluationType::Corrected);
        c.state = 2;
        assert_eq!(validate_experiment_pair(&b, &c), PairValidation::Mismatch(vec!["state".into()]));
    }

    #[test]
    fn pair_with_itself_is_degenerate() {
        let b = spec("x", EvaluationType::Buggy);
        assert_eq!(
            validate_experiment_pair(&b, &b),
            PairValidation::Mismatch(vec!["evaluation_type must differ".into()])
        );
    }

    #[test]
    fn experiment_key_uses_lowercase_type() {
        assert_eq!(spec("study-pr31433", EvaluationType::Buggy).key(), "study-pr31433/buggy");
    }

    #[test]
    fn spec_validation() {
        let mut s = spec("x", EvaluationType::Buggy);
        assert!(s.validate().is_ok());
        s.epochs = 0;
        assert_eq!(s.validate(), Err(ModelError::NonPositive("epochs")));
        s.epochs = 1;
        s.bug_identifier.clear();
        assert_eq!(s.validate(), Err(ModelError::EmptyBugIdentifier));
    }

    #[test]
    fn train_fraction_parsing_and_ceiling() {
        let f: TrainFraction = "0.8".parse().unwrap();
        assert_eq!(f, TrainFraction::new(4, 5).unwrap());
        assert_eq!(f.train_len(10), 8);
        assert_eq!(f.train_len(11), 9);
        assert_eq!("1/2".parse::<TrainFraction>().unwrap().train_len(2), 1);
        assert!("1/1".parse::<TrainFraction>().is_err());
        assert!("0/3".parse::<TrainFraction>().is_err());
        assert!("1.5".parse::<TrainFraction>().is_err());
    }

    #[test]
    fn manifest_validation() {
        let f = TrainFraction::new(1, 2).unwrap();
        let mut m = ChallengeManifest::synthetic("c", 4, f);
        assert!(m.validate().is_ok());
        m.item_count = 5;
        assert!(m.validate().is_err());
        let tight = ChallengeManifest::synthetic("c", 2, TrainFraction::new(99, 100).unwrap());
        assert!(tight.validate().is_err());
    }

    #[test]
    fn results_sort_and_reject_duplicates() {
        let s = spec("x", EvaluationType::Buggy);
        let run = |i| RunMetrics { run_index: i, accuracy: 0.5, precision: 0.5, recall: 0.5, f1: 0.5 };
        let r = ExperimentResults::new(s.clone(), vec![run(2), run(0), run(1)]).unwrap();
        assert_eq!(r.runs.iter().map(|r| r.run_index).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(r.completed_runs, 3);
        assert_eq!(r.shortfall(), 47);
        assert!(ExperimentResults::new(s, vec![run(0), run(0)]).is_err());
    }

    #[test]
    fn metrics_out_of_range_rejected() {
        let m = RunMetrics { run_index: 0, accuracy: 1.1, precision: 0.5, recall: 0.5, f1: 0.5 };
        assert!(matches!(m.validate(), Err(ModelError::MetricOutOfRange { name: "accuracy", .. })));
    }

    fn arb_spec() -> impl Strategy<Value = ExperimentSpec> {
        (
            "[a-z0-9-]{1,12}",
            any::<bool>(),
            "[a-zA-Z0-9 ]{0,8}",
            "[a-z0-9]{0,8}",
            any::<u64>(),
            "\\PC{0,8}",
            "\\PC{0,8}",
            1u32..100,
            1u32..100,
        )
            .prop_map(|(bug, b, model, challenge, state, artifact, software, epochs, planned_runs)| ExperimentSpec {
                bug_identifier: bug,
                evaluation_type: if b { EvaluationType::Buggy } else { EvaluationType::Corrected },
                model,
                challenge,
                state,
                artifact,
                software,
                epochs,
                planned_runs,
            })
    }

    proptest! {
        #[test]
        fn spec_records_round_trip(s in arb_spec()) {
            let line = record::encode(&s);
            let back: ExperimentSpec = record::decode(&line).unwrap();
            prop_assert_eq!(record::encode(&back), line);
            prop_assert_eq!(back, s);
        }

        #[test]
        fn run_metrics_round_trip(i: u32, a in 0.0f64..=1.0, p in 0.0f64..=1.0, r in 0.0f64..=1.0, f in 0.0f64..=1.0) {
            let m = RunMetrics { run_index: i, accuracy: a, precision: p, recall: r, f1: f };
            let line = record::encode(&m);
            let back: RunMetrics = record::decode(&line).unwrap();
            prop_assert_eq!(back, m);
            prop_assert_eq!(record::encode(&back), line);
        }

        #[test]
        fn pair_validation_is_symmetric(a in arb_spec(), b in arb_spec()) {
            let sorted = |v: PairValidation| match v {
                PairValidation::Ok => vec![],
                PairValidation::Mismatch(mut m) => { m.sort(); m }
            };
            prop_assert_eq!(sorted(validate_experiment_pair(&a, &b)), sorted(validate_experiment_pair(&b, &a)));
        }
    }
}
