//! Seeded train/test splits with order-sensitive checksums.
//!
//! Everything here is a pure function of its inputs and bit-exact across
//! platforms, so any client in any language can recompute what the server
//! served.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::model::ChallengeManifest;
use crate::record::{dec_u64, Digest};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("challenge has {0} items; at least 2 are needed for a train/test split")]
    ChallengeTooSmall(usize),
}

/// One SplitMix64 step: `(new_state, output)`.
pub fn splitmix64_next(state: u64) -> (u64, u64) {
    let state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (state, z ^ (z >> 31))
}

/// Stateful wrapper around [`splitmix64_next`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        let (state, out) = splitmix64_next(self.state);
        self.state = state;
        out
    }

    /// Uniform in (0, 1]: `(output + 1) / 2^64`.
    pub fn next_open01(&mut self) -> f64 {
        (self.next_u64() as f64 + 1.0) / 18_446_744_073_709_551_616.0
    }

    /// Standard normal via Box–Muller (cosine branch), two draws per sample.
    pub fn next_standard_normal(&mut self) -> f64 {
        let u1 = self.next_open01();
        let u2 = self.next_open01();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Fisher–Yates over `0..n` driven by SplitMix64(`seed`), swapping position
/// `j` with `output mod (j + 1)` for `j` from `n - 1` down to 1.
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = SplitMix64::new(seed);
    for j in (1..n).rev() {
        let i = (rng.next_u64() % (j as u64 + 1)) as usize;
        perm.swap(i, j);
    }
    perm
}

/// `d0 = SHA-256(BE64(seed))`, `d_k = SHA-256(d_{k-1} || BE64(index_k))`.
pub fn chain_checksum(seed: u64, indices: &[usize]) -> Digest {
    let mut d: [u8; 32] = Sha256::digest(seed.to_be_bytes()).into();
    for &idx in indices {
        let mut h = Sha256::new();
        h.update(d);
        h.update((idx as u64).to_be_bytes());
        d = h.finalize().into();
    }
    Digest(d)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub run_index: u32,
    #[serde(with = "dec_u64")]
    pub split_seed: u64,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub train_checksum: Digest,
    pub test_checksum: Digest,
}

impl SplitAssignment {
    /// Recomputes both checksums; what a client runs on receipt.
    pub fn verify(&self) -> bool {
        chain_checksum(self.split_seed, &self.train_indices) == self.train_checksum
            && chain_checksum(self.split_seed, &self.test_indices) == self.test_checksum
    }
}

/// Splits `manifest` into `ceil(f * n)` train and the remaining test items,
/// both in permuted order. `run_index` is carried through for auditing and
/// does not affect the split.
pub fn make_split(manifest: &ChallengeManifest, split_seed: u64, run_index: u32) -> Result<SplitAssignment, SplitError> {
    let n = manifest.item_digests.len();
    if n < 2 {
        return Err(SplitError::ChallengeTooSmall(n));
    }
    let mut perm = seeded_permutation(n, split_seed);
    let test_indices = perm.split_off(manifest.train_fraction.train_len(n));
    let train_indices = perm;
    Ok(SplitAssignment {
        run_index,
        split_seed,
        train_checksum: chain_checksum(split_seed, &train_indices),
        test_checksum: chain_checksum(split_seed, &test_indices),
        train_indices,
        test_indices,
    })
}
