//! Deterministic per-experiment seeds backed by a crash-safe journal.
//!
//! Root seeds are a keyed hash of the experiment key, so the journal is a
//! cache of derivable values plus the issue counter, never the only copy of
//! a seed.

use std::collections::HashMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::journal::{Journal, JournalError};
use crate::record::{self, dec_u64};

/// Separator byte between master key and experiment key.
const KEY_SEPARATOR: u8 = 0x1F;

#[derive(Debug, Error)]
pub enum SeedError {
    #[error("experiment key must be non-empty")]
    InvalidKey,
    #[error("unknown sub-seed purpose {0:?} (expected \"split\" or \"client-rng\")")]
    InvalidPurpose(String),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("seed journal line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
}

/// Consumers that receive their own stream derived from a root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Split,
    ClientRng,
}

impl Purpose {
    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::Split => "split",
            Purpose::ClientRng => "client-rng",
        }
    }
}

impl std::str::FromStr for Purpose {
    type Err = SeedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "split" => Ok(Purpose::Split),
            "client-rng" => Ok(Purpose::ClientRng),
            other => Err(SeedError::InvalidPurpose(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    /// `"<bug_identifier>/<evaluation_type>"`.
    pub experiment_key: String,
    #[serde(with = "dec_u64")]
    pub root_seed: u64,
    /// How many times sub-seeds for this key have been handed out.
    pub generation: u64,
    /// Seconds since the Unix epoch; informational only.
    pub created_at: u64,
}

fn be_prefix_u64(digest: &[u8]) -> u64 {
    u64::from_be_bytes(digest[..8].try_into().expect("SHA-256 output is 32 bytes"))
}

/// First 8 bytes (big-endian) of `SHA-256(master_key || 0x1F || experiment_key)`.
pub fn derive_root_seed(master_key: &[u8], experiment_key: &str) -> Result<u64, SeedError> {
    if experiment_key.is_empty() {
        return Err(SeedError::InvalidKey);
    }
    let mut h = Sha256::new();
    h.update(master_key);
    h.update([KEY_SEPARATOR]);
    h.update(experiment_key.as_bytes());
    Ok(be_prefix_u64(&h.finalize()))
}

/// First 8 bytes (big-endian) of `SHA-256(BE64(root) || purpose || BE64(index))`.
pub fn derive_subseed(record: &SeedRecord, purpose: Purpose, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(record.root_seed.to_be_bytes());
    h.update(purpose.as_str().as_bytes());
    h.update(index.to_be_bytes());
    be_prefix_u64(&h.finalize())
}

/// String-keyed variant of [`derive_subseed`] for callers holding an
/// unchecked purpose name.
pub fn derive_subseed_named(record: &SeedRecord, purpose: &str, index: u64) -> Result<u64, SeedError> {
    Ok(derive_subseed(record, purpose.parse()?, index))
}

/// Seeds keyed by experiment, journaled one record per line.
///
/// The latest line for a key wins; every line for a key carries the same
/// root seed and a non-decreasing generation.
#[derive(Debug)]
pub struct SeedRegistry {
    master_key: Vec<u8>,
    journal: Journal,
    records: HashMap<String, SeedRecord>,
}

impl SeedRegistry {
    pub fn open(path: impl AsRef<Path>, master_key: &[u8]) -> Result<Self, SeedError> {
        let (journal, replay) = Journal::open(path)?;
        let mut records: HashMap<String, SeedRecord> = HashMap::new();
        for (i, line) in replay.records.iter().enumerate() {
            let bad = |reason: String| SeedError::BadRecord { line: i + 1, reason };
            let rec: SeedRecord = record::decode(line).map_err(|e| bad(e.to_string()))?;
            let derived = derive_root_seed(master_key, &rec.experiment_key).map_err(|e| bad(e.to_string()))?;
            if derived != rec.root_seed {
                return Err(bad(format!(
                    "root seed {} for {:?} does not match the configured master key",
                    rec.root_seed, rec.experiment_key
                )));
            }
            if let Some(prev) = records.get(&rec.experiment_key) {
                if rec.generation < prev.generation {
                    return Err(bad("generation went backwards".into()));
                }
            }
            records.insert(rec.experiment_key.clone(), rec);
        }
        Ok(SeedRegistry { master_key: master_key.to_vec(), journal, records })
    }

    pub fn get(&self, experiment_key: &str) -> Option<&SeedRecord> {
        self.records.get(experiment_key)
    }

    /// Returns the stored record, or derives, journals and returns a new one.
    pub fn get_or_create(&mut self, experiment_key: &str) -> Result<SeedRecord, SeedError> {
        if let Some(rec) = self.records.get(experiment_key) {
            return Ok(rec.clone());
        }
        let root_seed = derive_root_seed(&self.master_key, experiment_key)?;
        let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let rec = SeedRecord { experiment_key: experiment_key.to_string(), root_seed, generation: 0, created_at };
        self.journal.append(&record::encode(&rec))?;
        self.records.insert(rec.experiment_key.clone(), rec.clone());
        Ok(rec)
    }

    /// Bumps the generation of `experiment_key` and journals it. Callers
    /// release sub-seeds only after this returns.
    pub fn record_issue(&mut self, experiment_key: &str) -> Result<SeedRecord, SeedError> {
        let mut rec = self.get_or_create(experiment_key)?;
        rec.generation += 1;
        self.journal.append(&record::encode(&rec))?;
        self.records.insert(rec.experiment_key.clone(), rec.clone());
        Ok(rec)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    // Expected values computed with Python's hashlib (tests/oracles/oracles.py).
    const ROOT_STUDY_BUGGY: u64 = 9531888692967303985;
    const ROOT_K1_E1: u64 = 14882775800851562895;
    const ROOT_K2_E1: u64 = 4479979365159468799;

    fn rec(root_seed: u64) -> SeedRecord {
        SeedRecord { experiment_key: "k".into(), root_seed, generation: 0, created_at: 0 }
    }

    #[test]
    fn root_seed_matches_independent_hash() {
        assert_eq!(derive_root_seed(b"", "study-pr31433/buggy").unwrap(), ROOT_STUDY_BUGGY);
        assert_eq!(derive_root_seed(b"k1", "e1").unwrap(), ROOT_K1_E1);
        assert_eq!(derive_root_seed(b"k2", "e1").unwrap(), ROOT_K2_E1);
        assert_ne!(ROOT_K1_E1, ROOT_K2_E1);
    }

    #[test]
    fn root_seed_is_deterministic() {
        assert_eq!(derive_root_seed(b"", "e1").unwrap(), derive_root_seed(b"", "e1").unwrap());
    }

    #[test]
    fn empty_key_is_invalid() {
        assert!(matches!(derive_root_seed(b"", ""), Err(SeedError::InvalidKey)));
    }

    #[test]
    fn subseeds_match_independent_hash() {
        let r = rec(ROOT_STUDY_BUGGY);
        assert_eq!(derive_subseed(&r, Purpose::Split, 0), 11676332672806127676);
        assert_eq!(derive_subseed(&r, Purpose::Split, 1), 1007971145695416620);
        assert_eq!(derive_subseed(&r, Purpose::ClientRng, 0), 6516915073118262347);
        assert_eq!(derive_subseed(&r, Purpose::ClientRng, 1), 4817759406894488386);
        assert_eq!(derive_subseed(&r, Purpose::Split, 0), derive_subseed(&r, Purpose::Split, 0));
    }

    #[test]
    fn unknown_purpose_rejected() {
        let r = rec(1);
        assert!(matches!(derive_subseed_named(&r, "labels", 0), Err(SeedError::InvalidPurpose(_))));
        assert_eq!(derive_subseed_named(&r, "split", 3).unwrap(), derive_subseed(&r, Purpose::Split, 3));
    }

    #[test]
    fn get_or_create_is_idempotent_and_durable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seeds.journal");
        let first = {
            let mut reg = SeedRegistry::open(&path, b"").unwrap();
            let a = reg.get_or_create("study-pr31433/buggy").unwrap();
            let b = reg.get_or_create("study-pr31433/buggy").unwrap();
            assert_eq!(record::encode(&a), record::encode(&b));
            a
        };
        let mut reg = SeedRegistry::open(&path, b"").unwrap();
        let again = reg.get_or_create("study-pr31433/buggy").unwrap();
        assert_eq!(again, first);
        assert_eq!(again.root_seed, ROOT_STUDY_BUGGY);
    }

    #[test]
    fn replay_after_journal_loss_reproduces_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let keys = ["a/buggy", "a/corrected", "b/buggy"];
        let run = |path: &Path| {
            let mut reg = SeedRegistry::open(path, b"mk").unwrap();
            keys.iter().map(|k| reg.get_or_create(k).unwrap().root_seed).collect::<Vec<_>>()
        };
        let p1 = dir.path().join("one");
        let first = run(&p1);
        std::fs::remove_file(&p1).unwrap();
        assert_eq!(run(&p1), first);
    }

    #[test]
    fn generation_persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seeds.journal");
        {
            let mut reg = SeedRegistry::open(&path, b"").unwrap();
            reg.record_issue("x/buggy").unwrap();
            assert_eq!(reg.record_issue("x/buggy").unwrap().generation, 2);
        }
        let reg = SeedRegistry::open(&path, b"").unwrap();
        assert_eq!(reg.get("x/buggy").unwrap().generation, 2);
    }

    #[test]
    fn wrong_master_key_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seeds.journal");
        SeedRegistry::open(&path, b"one").unwrap().get_or_create("x").unwrap();
        assert!(matches!(SeedRegistry::open(&path, b"two"), Err(SeedError::BadRecord { line: 1, .. })));
    }

    #[test]
    fn corrupt_line_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seeds.journal");
        {
            let mut reg = SeedRegistry::open(&path, b"").unwrap();
            reg.get_or_create("a").unwrap();
            reg.get_or_create("b").unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap().replacen("\"b\"", "\"c\"", 1);
        std::fs::write(&path, text).unwrap();
        match SeedRegistry::open(&path, b"") {
            Err(SeedError::Journal(JournalError::Corrupt { line, .. })) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ten_thousand_keys_have_distinct_root_seeds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(0x5eed);
        let mut keys = HashSet::new();
        while keys.len() < 10_000 {
            let len = rng.gen_range(1..24);
            let key: String = (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
            keys.insert(key);
        }
        let seeds: HashSet<u64> = keys.iter().map(|k| derive_root_seed(b"", k).unwrap()).collect();
        assert_eq!(seeds.len(), keys.len());
    }
}
