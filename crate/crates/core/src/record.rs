//! Canonical record encoding.
//!
//! Every persisted or transmitted structure is a single line of UTF-8 object
//! notation with lexicographically sorted keys and no insignificant
//! whitespace. 64-bit integers that must survive every consumer unchanged
//! (seeds) are rendered as unsigned decimal strings, digests as lowercase hex.

use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("record is not valid UTF-8")]
    NotUtf8,
}

/// Encodes `value` as a canonical record (no trailing newline).
pub fn encode<T: Serialize>(value: &T) -> String {
    // Routing through `Value` sorts object keys (serde_json's map is ordered).
    let value = serde_json::to_value(value).expect("record types always serialize");
    serde_json::to_string(&value).expect("values always serialize")
}

pub fn decode<T: DeserializeOwned>(line: &str) -> Result<T, RecordError> {
    serde_json::from_str(line).map_err(|e| RecordError::Malformed(e.to_string()))
}

pub fn decode_bytes<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, RecordError> {
    let line = std::str::from_utf8(bytes).map_err(|_| RecordError::NotUtf8)?;
    decode(line)
}

/// Decodes a file holding one record per line, skipping blank lines.
pub fn decode_lines<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, RecordError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| decode(l).map_err(|e| RecordError::Malformed(format!("line {}: {e}", i + 1))))
        .collect()
}

/// A 32-byte SHA-256 digest rendered as 64 lowercase hex characters.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Digest {
    type Err = RecordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 64 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(RecordError::Malformed(format!("digest must be 64 lowercase hex chars: {s:?}")));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|e| RecordError::Malformed(e.to_string()))?;
        Ok(Digest(out))
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Serde adapter: `u64` as an unsigned decimal string.
pub mod dec_u64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(serde::de::Error::custom)
    }

    /// Strict parse: digits only, no sign, no leading zeros.
    pub fn parse(s: &str) -> Result<u64, String> {
        let canonical = !s.is_empty()
            && s.bytes().all(|b| b.is_ascii_digit())
            && (s == "0" || !s.starts_with('0'));
        if !canonical {
            return Err(format!("not a canonical unsigned decimal: {s:?}"));
        }
        s.parse().map_err(|e| format!("{s:?}: {e}"))
    }
}

/// Serde adapter: `f64` as a decimal string (shortest round-trip form).
pub mod dec_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_decimal(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_decimal(&s).map_err(serde::de::Error::custom)
    }
}

/// Renders a finite float without exponent; parses back to the same value.
pub fn format_decimal(v: f64) -> String {
    format!("{v}")
}

/// Parses a plain decimal (`[-]digits[.digits]`), rejecting exponents,
/// `inf` and `NaN`.
pub fn parse_decimal(s: &str) -> Result<f64, String> {
    let body = s.strip_prefix('-').unwrap_or(s);
    let mut parts = body.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    let ok = !int.is_empty()
        && int.bytes().all(|b| b.is_ascii_digit())
        && frac.is_none_or(|f| !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()));
    if !ok {
        return Err(format!("not a plain decimal: {s:?}"));
    }
    s.parse().map_err(|e| format!("{s:?}: {e}"))
}
