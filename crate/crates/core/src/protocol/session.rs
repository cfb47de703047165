//! Per-connection session state machine.
//!
//! `HELLO` must come first. After the handshake a client either `REGISTER`s
//! an experiment or resumes one the server already knows by naming its key.
//! A seed echo that disagrees with the server terminates the session; nothing
//! leaves the terminated state.

use super::message::{ErrorCode, Message, PROTOCOL_VERSION};
use crate::model::{ExperimentSpec, RunMetrics};
use crate::record::Digest;
use crate::split::SplitAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SessionState {
    #[default]
    AwaitingHello,
    Ready,
    Terminated,
}

/// Seeds returned by a successful registration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IssuedSeeds {
    pub root_seed: u64,
    pub split_seed: u64,
    pub client_rng_seed: u64,
}

/// A refusal from the backend, sent to the client as an `ERROR` frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub code: ErrorCode,
    pub detail: String,
}

impl Rejection {
    pub fn new(code: ErrorCode, detail: impl Into<String>) -> Self {
        Rejection { code, detail: detail.into() }
    }
}

impl From<Rejection> for Message {
    fn from(r: Rejection) -> Message {
        Message::error(r.code, r.detail)
    }
}

/// What a session needs from the server.
pub trait SessionBackend {
    fn register(&self, spec: &ExperimentSpec) -> Result<IssuedSeeds, Rejection>;
    /// Root seed of a known experiment, `None` if the key is unknown.
    fn root_seed(&self, experiment_key: &str) -> Result<Option<u64>, Rejection>;
    fn split(&self, experiment_key: &str, run_index: u32) -> Result<(SplitAssignment, Digest), Rejection>;
    fn submit(&self, experiment_key: &str, metrics: RunMetrics) -> Result<(), Rejection>;
}

/// Advances the session by one request and produces exactly one response.
pub fn session_step<B: SessionBackend + ?Sized>(
    state: SessionState,
    incoming: Message,
    backend: &B,
) -> (SessionState, Message) {
    use SessionState::*;
    match (state, incoming) {
        (Terminated, _) => (Terminated, Message::error(ErrorCode::BadState, "session terminated")),
        (AwaitingHello, Message::Hello { protocol_version }) if protocol_version == PROTOCOL_VERSION => {
            (Ready, Message::HelloAck { protocol_version })
        }
        (AwaitingHello, Message::Hello { protocol_version }) => (
            AwaitingHello,
            Message::error(
                ErrorCode::UnsupportedVersion,
                format!("protocol version {protocol_version} unsupported; server speaks {PROTOCOL_VERSION}"),
            ),
        ),
        (AwaitingHello, other) => (
            AwaitingHello,
            Message::error(ErrorCode::BadState, format!("{} before HELLO", other.type_name())),
        ),
        (Ready, Message::Register { experiment }) => match backend.register(&experiment) {
            Ok(s) => (
                Ready,
                Message::Registered {
                    root_seed: s.root_seed,
                    split_seed: s.split_seed,
                    client_rng_seed: s.client_rng_seed,
                },
            ),
            Err(r) => (Ready, r.into()),
        },
        (Ready, Message::RequestSplit { experiment_key, run_index, echoed_seed }) => {
            match backend.root_seed(&experiment_key) {
                Err(r) => (Ready, r.into()),
                Ok(None) => (Ready, unknown(&experiment_key)),
                Ok(Some(stored)) if stored != echoed_seed => {
                    log::warn!("seed mismatch on {experiment_key:?}: echoed {echoed_seed}, stored {stored}");
                    (
                        Terminated,
                        Message::error(
                            ErrorCode::SeedMismatch,
                            format!("echoed seed {echoed_seed} does not match the server's seed for {experiment_key:?}"),
                        ),
                    )
                }
                Ok(Some(_)) => match backend.split(&experiment_key, run_index) {
                    Ok((split, manifest_digest)) => (Ready, Message::split(&split, manifest_digest)),
                    Err(r) => (Ready, r.into()),
                },
            }
        }
        (Ready, Message::SubmitMetrics { experiment_key, run_index, accuracy, precision, recall, f1 }) => {
            let metrics = RunMetrics { run_index, accuracy, precision, recall, f1 };
            if let Err(e) = metrics.validate() {
                return (Ready, Message::error(ErrorCode::InvalidMetrics, e.to_string()));
            }
            match backend.root_seed(&experiment_key) {
                Err(r) => (Ready, r.into()),
                Ok(None) => (Ready, unknown(&experiment_key)),
                Ok(Some(_)) => match backend.submit(&experiment_key, metrics) {
                    Ok(()) => (Ready, Message::MetricsAck { run_index }),
                    Err(r) => (Ready, r.into()),
                },
            }
        }
        (Ready, other) => (
            Ready,
            Message::error(ErrorCode::BadState, format!("{} is not a valid request here", other.type_name())),
        ),
    }
}

fn unknown(key: &str) -> Message {
    Message::error(ErrorCode::UnknownExperiment, format!("no experiment registered as {key:?}"))
}
