//! Reproducible ML experiment benchmarking.
//!
//! A server derives and journals one seed per experiment, serves seeded
//! train/test splits with chain checksums over a framed TCP protocol, and
//! collects per-run classification metrics. Buggy and corrected builds of
//! a framework are then compared metric by metric with a two-tailed
//! Wilcoxon–Mann–Whitney U-test.
//!
//! | module | role |
//! |---|---|
//! | [`model`] | experiments, challenges, runs and metrics |
//! | [`seed`] | seed derivation and the seed journal |
//! | [`split`] | SplitMix64, seeded permutations, chain checksums |
//! | [`protocol`] | frames, messages, session state machine |
//! | [`server`], [`store`] | the TCP server and its metrics journal |
//! | [`client`] | protocol client, trainer hook, synthetic trainer |
//! | [`stats`] | macro metrics, U-test, descriptive statistics |
//! | [`study`] | bug corpus filtering and p-value reports |

pub mod client;
pub mod journal;
pub mod model;
pub mod protocol;
pub mod record;
pub mod seed;
pub mod server;
pub mod split;
pub mod stats;
pub mod store;
pub mod study;
