use serde::{Deserialize, Serialize};

use super::frame::FrameError;
use crate::model::{ExperimentSpec, RunMetrics};
use crate::record::{self, dec_f64, dec_u64, Digest};
use crate::split::SplitAssignment;

pub const PROTOCOL_VERSION: u32 = 1;

/// Every request and response, tagged by the `"type"` field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    Hello {
        protocol_version: u32,
    },
    HelloAck {
        protocol_version: u32,
    },
    Register {
        experiment: ExperimentSpec,
    },
    Registered {
        #[serde(with = "dec_u64")]
        root_seed: u64,
        #[serde(with = "dec_u64")]
        split_seed: u64,
        #[serde(with = "dec_u64")]
        client_rng_seed: u64,
    },
    RequestSplit {
        experiment_key: String,
        run_index: u32,
        #[serde(with = "dec_u64")]
        echoed_seed: u64,
    },
    Split {
        run_index: u32,
        train_indices: Vec<usize>,
        test_indices: Vec<usize>,
        train_checksum: Digest,
        test_checksum: Digest,
        manifest_digest: Digest,
    },
    SubmitMetrics {
        experiment_key: String,
        run_index: u32,
        #[serde(with = "dec_f64")]
        accuracy: f64,
        #[serde(with = "dec_f64")]
        precision: f64,
        #[serde(with = "dec_f64")]
        recall: f64,
        #[serde(with = "dec_f64")]
        f1: f64,
    },
    MetricsAck {
        run_index: u32,
    },
    Error {
        code: String,
        detail: String,
    },
}

const KNOWN_TYPES: [&str; 9] = [
    "HELLO",
    "HELLO_ACK",
    "REGISTER",
    "REGISTERED",
    "REQUEST_SPLIT",
    "SPLIT",
    "SUBMIT_METRICS",
    "METRICS_ACK",
    "ERROR",
];

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "HELLO",
            Message::HelloAck { .. } => "HELLO_ACK",
            Message::Register { .. } => "REGISTER",
            Message::Registered { .. } => "REGISTERED",
            Message::RequestSplit { .. } => "REQUEST_SPLIT",
            Message::Split { .. } => "SPLIT",
            Message::SubmitMetrics { .. } => "SUBMIT_METRICS",
            Message::MetricsAck { .. } => "METRICS_ACK",
            Message::Error { .. } => "ERROR",
        }
    }

    /// Canonical payload bytes (without the length prefix).
    pub fn encode(&self) -> String {
        record::encode(self)
    }

    pub fn decode(payload: &[u8]) -> Result<Message, FrameError> {
        let text = std::str::from_utf8(payload).map_err(|_| FrameError::Protocol("payload is not UTF-8".into()))?;
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| FrameError::Protocol(format!("malformed record: {e}")))?;
        let ty = value
            .get("type")
            .ok_or_else(|| FrameError::Protocol("missing \"type\" field".into()))?
            .as_str()
            .ok_or_else(|| FrameError::Protocol("\"type\" must be a string".into()))?;
        if !KNOWN_TYPES.contains(&ty) {
            return Err(FrameError::UnknownMessage(ty.to_string()));
        }
        serde_json::from_value(value).map_err(|e| FrameError::Protocol(e.to_string()))
    }

    pub fn error(code: ErrorCode, detail: impl Into<String>) -> Message {
        Message::Error { code: code.as_str().to_string(), detail: detail.into() }
    }

    pub fn split(split: &SplitAssignment, manifest_digest: Digest) -> Message {
        Message::Split {
            run_index: split.run_index,
            train_indices: split.train_indices.clone(),
            test_indices: split.test_indices.clone(),
            train_checksum: split.train_checksum,
            test_checksum: split.test_checksum,
            manifest_digest,
        }
    }

    pub fn submit(experiment_key: &str, m: &RunMetrics) -> Message {
        Message::SubmitMetrics {
            experiment_key: experiment_key.to_string(),
            run_index: m.run_index,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        }
    }

    pub fn is_error_code(&self, code: ErrorCode) -> bool {
        matches!(self, Message::Error { code: c, .. } if c == code.as_str())
    }
}

/// Codes carried by `ERROR` responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    BadState,
    UnknownExperiment,
    DuplicateRun,
    SeedMismatch,
    UnsupportedVersion,
    InvalidExperiment,
    InvalidMetrics,
    UnknownChallenge,
    SpecConflict,
    ProtocolError,
    UnknownMessage,
    Internal,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::BadState => "BAD_STATE",
            ErrorCode::UnknownExperiment => "UNKNOWN_EXPERIMENT",
            ErrorCode::DuplicateRun => "DUPLICATE_RUN",
            ErrorCode::SeedMismatch => "SEED_MISMATCH",
            ErrorCode::UnsupportedVersion => "UNSUPPORTED_VERSION",
            ErrorCode::InvalidExperiment => "INVALID_EXPERIMENT",
            ErrorCode::InvalidMetrics => "INVALID_METRICS",
            ErrorCode::UnknownChallenge => "UNKNOWN_CHALLENGE",
            ErrorCode::SpecConflict => "SPEC_CONFLICT",
            ErrorCode::ProtocolError => "PROTOCOL_ERROR",
            ErrorCode::UnknownMessage => "UNKNOWN_MESSAGE",
            ErrorCode::Internal => "INTERNAL",
        }
    }
}
