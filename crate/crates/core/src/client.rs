//! Protocol client and the synthetic experiment driver.
//!
//! [`run_experiment`] follows the run loop every conforming client uses:
//! handshake and register once, then for each run reset the trainer to the
//! issued seed, fetch and verify the split, train, and submit the metrics.

use std::io::{BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};

use thiserror::Error;

use crate::model::{ExperimentResults, ExperimentSpec, ModelError, RunMetrics};
use crate::protocol::frame::{read_message, write_message, FrameError};
use crate::protocol::{Message, PROTOCOL_VERSION};
use crate::record::Digest;
use crate::split::{chain_checksum, splitmix64_next, SplitAssignment, SplitMix64};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("server refused {request}: {code}: {detail}")]
    Server { request: &'static str, code: String, detail: String },
    #[error("unexpected {got} in reply to {request}")]
    Unexpected { request: &'static str, got: &'static str },
    #[error("integrity check failed for run {run_index}: {subset} checksum mismatch")]
    Integrity { run_index: u32, subset: &'static str },
    #[error("trainer produced invalid metrics: {0}")]
    InvalidMetrics(#[from] ModelError),
}

/// Seeds handed out by `REGISTERED`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Registration {
    pub root_seed: u64,
    pub split_seed: u64,
    pub client_rng_seed: u64,
}

/// A verified split as received from the server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceivedSplit {
    pub assignment: SplitAssignment,
    pub manifest_digest: Digest,
}

/// One connection, one request in flight at a time.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Client, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Client { reader: BufReader::new(stream.try_clone()?), writer: BufWriter::new(stream) })
    }

    /// Sends one request and returns the raw response.
    pub fn request(&mut self, msg: &Message) -> Result<Message, ClientError> {
        write_message(&mut self.writer, msg)?;
        Ok(read_message(&mut self.reader)?)
    }

    fn expect(&mut self, msg: &Message) -> Result<Message, ClientError> {
        let request = msg.type_name();
        match self.request(msg)? {
            Message::Error { code, detail } => Err(ClientError::Server { request, code, detail }),
            other => Ok(other),
        }
    }

    pub fn hello(&mut self) -> Result<(), ClientError> {
        match self.expect(&Message::Hello { protocol_version: PROTOCOL_VERSION })? {
            Message::HelloAck { .. } => Ok(()),
            other => Err(ClientError::Unexpected { request: "HELLO", got: other.type_name() }),
        }
    }

    pub fn register(&mut self, spec: &ExperimentSpec) -> Result<Registration, ClientError> {
        match self.expect(&Message::Register { experiment: spec.clone() })? {
            Message::Registered { root_seed, split_seed, client_rng_seed } => {
                Ok(Registration { root_seed, split_seed, client_rng_seed })
            }
            other => Err(ClientError::Unexpected { request: "REGISTER", got: other.type_name() }),
        }
    }

    /// Requests the split for `run_index`, echoing the root seed, and checks
    /// both chain checksums against `split_seed`.
    pub fn fetch_split(
        &mut self,
        experiment_key: &str,
        run_index: u32,
        reg: &Registration,
    ) -> Result<ReceivedSplit, ClientError> {
        let req = Message::RequestSplit { experiment_key: experiment_key.into(), run_index, echoed_seed: reg.root_seed };
        match self.expect(&req)? {
            Message::Split { run_index: got, train_indices, test_indices, train_checksum, test_checksum, manifest_digest } => {
                if chain_checksum(reg.split_seed, &train_indices) != train_checksum {
                    return Err(ClientError::Integrity { run_index: got, subset: "train" });
                }
                if chain_checksum(reg.split_seed, &test_indices) != test_checksum {
                    return Err(ClientError::Integrity { run_index: got, subset: "test" });
                }
                let assignment = SplitAssignment {
                    run_index: got,
                    split_seed: reg.split_seed,
                    train_indices,
                    test_indices,
                    train_checksum,
                    test_checksum,
                };
                Ok(ReceivedSplit { assignment, manifest_digest })
            }
            other => Err(ClientError::Unexpected { request: "REQUEST_SPLIT", got: other.type_name() }),
        }
    }

    pub fn submit(&mut self, experiment_key: &str, metrics: &RunMetrics) -> Result<(), ClientError> {
        metrics.validate()?;
        match self.expect(&Message::submit(experiment_key, metrics))? {
            Message::MetricsAck { run_index } if run_index == metrics.run_index => Ok(()),
            other => Err(ClientError::Unexpected { request: "SUBMIT_METRICS", got: other.type_name() }),
        }
    }
}

/// A training procedure driven by the run loop.
pub trait Trainer {
    /// Called at the start of every run, before any randomness is consumed.
    fn reset(&mut self, client_rng_seed: u64);
    /// Trains for `epochs` epochs on the split and returns test-set metrics.
    fn train(&mut self, run_index: u32, split: &SplitAssignment, epochs: u32) -> RunMetrics;
}

/// Connects, registers `spec` and completes `planned_runs` runs.
/// Returns the client's own record of what it submitted.
pub fn run_experiment(
    addr: impl ToSocketAddrs,
    spec: &ExperimentSpec,
    trainer: &mut dyn Trainer,
) -> Result<ExperimentResults, ClientError> {
    let mut client = Client::connect(addr)?;
    client.hello()?;
    let reg = client.register(spec)?;
    let key = spec.key();
    let mut runs = Vec::with_capacity(spec.planned_runs as usize);
    for run_index in 0..spec.planned_runs {
        trainer.reset(reg.client_rng_seed);
        let split = client.fetch_split(&key, run_index, &reg)?;
        let metrics = trainer.train(run_index, &split.assignment, spec.epochs);
        client.submit(&key, &metrics)?;
        runs.push(metrics);
    }
    Ok(ExperimentResults::new(spec.clone(), runs)?)
}

/// Target behaviour of the synthetic trainer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticProfile {
    /// Mean of accuracy, precision, recall and F1, in that order.
    pub mean: [f64; 4],
    /// Standard deviation of the per-run noise.
    pub spread: f64,
    /// Shift approached as epochs grow: `epochs_effect · (1 − 1/epochs)`.
    pub epochs_effect: f64,
}

impl SyntheticProfile {
    pub fn uniform(mean: f64, spread: f64) -> Self {
        SyntheticProfile { mean: [mean; 4], spread, epochs_effect: 0.0 }
    }
}

/// Stand-in for a real training procedure.
///
/// `reset` rewinds a SplitMix64 stream to the issued seed, exactly as a real
/// client reseeds its framework. The first draw plays the role of the
/// seeded initial state and is identical in every run. Run-to-run variation
/// models the non-determinism that seeding does not control: it comes from
/// a stream keyed by that draw and the run index.
#[derive(Debug, Clone)]
pub struct SyntheticTrainer {
    profile: SyntheticProfile,
    rng: SplitMix64,
}

impl SyntheticTrainer {
    pub fn new(profile: SyntheticProfile) -> Self {
        SyntheticTrainer { profile, rng: SplitMix64::new(0) }
    }
}

impl Trainer for SyntheticTrainer {
    fn reset(&mut self, client_rng_seed: u64) {
        self.rng = SplitMix64::new(client_rng_seed);
    }

    fn train(&mut self, run_index: u32, _split: &SplitAssignment, epochs: u32) -> RunMetrics {
        let init = self.rng.next_u64();
        let (_, run_key) = splitmix64_next(u64::from(run_index));
        let mut noise = SplitMix64::new(init ^ run_key);
        let shift = self.profile.epochs_effect * (1.0 - 1.0 / f64::from(epochs.max(1)));
        let mut draw = |mean: f64| {
            let z = noise.next_standard_normal();
            (mean + shift + self.profile.spread * z).clamp(0.0, 1.0)
        };
        let [a, p, r, f] = self.profile.mean;
        RunMetrics { run_index, accuracy: draw(a), precision: draw(p), recall: draw(r), f1: draw(f) }
    }
}

/// Runs one full synthetic experiment against a live server.
pub fn synthetic_client_run(
    addr: impl ToSocketAddrs,
    spec: &ExperimentSpec,
    profile: SyntheticProfile,
) -> Result<ExperimentResults, ClientError> {
    run_experiment(addr, spec, &mut SyntheticTrainer::new(profile))
}
