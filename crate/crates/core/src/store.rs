//! Durable metric collection: experiments and their runs, journaled in the
//! same line format as the seed journal.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::journal::{self, Journal, JournalError};
use crate::model::{ExperimentResults, ExperimentSpec, ModelError, RunMetrics};
use crate::record;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("metrics journal line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
    #[error("run {run_index} of {experiment_key:?} was already submitted")]
    DuplicateRun { experiment_key: String, run_index: u32 },
    #[error("{0:?} is already registered with different attributes")]
    SpecConflict(String),
    #[error(transparent)]
    Invalid(#[from] ModelError),
}

/// One journal line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StoreEntry {
    Experiment { experiment: ExperimentSpec },
    Run { experiment_key: String, run: RunMetrics },
}

#[derive(Debug, Clone)]
struct Stored {
    spec: ExperimentSpec,
    runs: BTreeMap<u32, RunMetrics>,
}

/// In-memory view of a metrics journal; what [`MetricsStore`] keeps and what
/// offline tools load.
#[derive(Debug, Clone, Default)]
pub struct ResultsIndex {
    experiments: BTreeMap<String, Stored>,
}

impl ResultsIndex {
    fn apply(&mut self, entry: StoreEntry) -> Result<(), StoreError> {
        match entry {
            StoreEntry::Experiment { experiment } => {
                experiment.validate()?;
                let key = experiment.key();
                match self.experiments.get(&key) {
                    Some(existing) if existing.spec != experiment => return Err(StoreError::SpecConflict(key)),
                    Some(_) => {}
                    None => {
                        self.experiments.insert(key, Stored { spec: experiment, runs: BTreeMap::new() });
                    }
                }
            }
            StoreEntry::Run { experiment_key, run } => {
                run.validate()?;
                let stored = self
                    .experiments
                    .get_mut(&experiment_key)
                    .ok_or_else(|| StoreError::UnknownExperiment(experiment_key.clone()))?;
                if stored.runs.contains_key(&run.run_index) {
                    return Err(StoreError::DuplicateRun { experiment_key, run_index: run.run_index });
                }
                stored.runs.insert(run.run_index, run);
            }
        }
        Ok(())
    }

    fn replay(records: &[String]) -> Result<Self, StoreError> {
        let mut index = ResultsIndex::default();
        for (i, line) in records.iter().enumerate() {
            let bad = |reason: String| StoreError::BadRecord { line: i + 1, reason };
            let entry: StoreEntry = record::decode(line).map_err(|e| bad(e.to_string()))?;
            index.apply(entry).map_err(|e| bad(e.to_string()))?;
        }
        Ok(index)
    }

    /// Loads a metrics journal without opening it for writing.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|source| JournalError::Storage { path: path.to_path_buf(), source })?;
        let (replay, _) = journal::parse(&bytes, path)?;
        ResultsIndex::replay(&replay.records)
    }

    pub fn spec(&self, experiment_key: &str) -> Option<&ExperimentSpec> {
        self.experiments.get(experiment_key).map(|s| &s.spec)
    }

    pub fn contains_run(&self, experiment_key: &str, run_index: u32) -> bool {
        self.experiments.get(experiment_key).is_some_and(|s| s.runs.contains_key(&run_index))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.experiments.keys().map(String::as_str)
    }

    /// All runs of `experiment_key`, sorted by run index.
    pub fn export(&self, experiment_key: &str) -> Result<ExperimentResults, StoreError> {
        let stored =
            self.experiments.get(experiment_key).ok_or_else(|| StoreError::UnknownExperiment(experiment_key.into()))?;
        Ok(ExperimentResults::new(stored.spec.clone(), stored.runs.values().copied().collect())?)
    }
}

/// Append-only metrics store. Not synchronized; the server serializes
/// writers around it.
#[derive(Debug)]
pub struct MetricsStore {
    journal: Journal,
    index: ResultsIndex,
}

impl MetricsStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let (journal, replay) = Journal::open(path)?;
        let index = ResultsIndex::replay(&replay.records)?;
        Ok(MetricsStore { journal, index })
    }

    pub fn index(&self) -> &ResultsIndex {
        &self.index
    }

    /// Registers `spec`; re-registering identical attributes is a no-op.
    /// Returns whether a new record was written.
    pub fn register(&mut self, spec: &ExperimentSpec) -> Result<bool, StoreError> {
        spec.validate()?;
        match self.index.spec(&spec.key()) {
            Some(existing) if existing == spec => Ok(false),
            Some(_) => Err(StoreError::SpecConflict(spec.key())),
            None => {
                self.commit(StoreEntry::Experiment { experiment: spec.clone() })?;
                Ok(true)
            }
        }
    }

    /// Durably appends one run; duplicates and unknown experiments are
    /// refused before anything is written.
    pub fn submit(&mut self, experiment_key: &str, run: RunMetrics) -> Result<(), StoreError> {
        run.validate()?;
        if self.index.spec(experiment_key).is_none() {
            return Err(StoreError::UnknownExperiment(experiment_key.into()));
        }
        if self.index.contains_run(experiment_key, run.run_index) {
            return Err(StoreError::DuplicateRun { experiment_key: experiment_key.into(), run_index: run.run_index });
        }
        self.commit(StoreEntry::Run { experiment_key: experiment_key.into(), run })
    }

    fn commit(&mut self, entry: StoreEntry) -> Result<(), StoreError> {
        self.journal.append(&record::encode(&entry))?;
        self.index.apply(entry)
    }

    pub fn export(&self, experiment_key: &str) -> Result<ExperimentResults, StoreError> {
        self.index.export(experiment_key)
    }
}
