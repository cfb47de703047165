//! Append-only line journal with a CRC32 per line.
//!
//! Line layout: `<canonical record>|<crc32 of the record bytes, 8 lowercase hex>\n`.
//! A line is committed once its newline is on stable storage. A trailing
//! fragment without newline is an interrupted append: it is dropped on open
//! and cut from the file so the next append starts on a fresh line. A
//! complete line whose checksum does not verify is corruption.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal {path}: {source}")]
    Storage { path: PathBuf, source: io::Error },
    #[error("journal {path} is corrupt at line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
}

/// Payloads recovered from an existing journal, in append order.
#[derive(Debug, Default)]
pub struct Replay {
    pub records: Vec<String>,
    /// Bytes of an interrupted trailing append that were discarded.
    pub torn_bytes: usize,
}

pub fn frame_line(record: &str) -> String {
    debug_assert!(!record.contains('\n'));
    format!("{record}|{:08x}\n", crc32fast::hash(record.as_bytes()))
}

/// Parses journal bytes without touching the file system.
pub fn parse(bytes: &[u8], path: &Path) -> Result<(Replay, usize), JournalError> {
    let corrupt = |line: usize, reason: String| JournalError::Corrupt { path: path.to_path_buf(), line, reason };
    let committed_len = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    let mut replay = Replay { records: Vec::new(), torn_bytes: bytes.len() - committed_len };
    for (i, raw) in bytes[..committed_len].split_inclusive(|&b| b == b'\n').enumerate() {
        let raw = &raw[..raw.len() - 1];
        let line = std::str::from_utf8(raw).map_err(|_| corrupt(i + 1, "not UTF-8".into()))?;
        let (record, crc) = line.rsplit_once('|').ok_or_else(|| corrupt(i + 1, "missing checksum".into()))?;
        let expected = u32::from_str_radix(crc, 16)
            .ok()
            .filter(|_| crc.len() == 8)
            .ok_or_else(|| corrupt(i + 1, format!("bad checksum field {crc:?}")))?;
        let actual = crc32fast::hash(record.as_bytes());
        if actual != expected {
            return Err(corrupt(i + 1, format!("checksum {actual:08x} != recorded {expected:08x}")));
        }
        replay.records.push(record.to_string());
    }
    Ok((replay, committed_len))
}

impl Journal {
    /// Opens (creating if needed) and replays the journal at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<(Journal, Replay), JournalError> {
        let path = path.as_ref().to_path_buf();
        let storage = |source| JournalError::Storage { path: path.clone(), source };
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path).map_err(storage)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(storage)?;
        let (replay, committed_len) = parse(&bytes, &path)?;
        if replay.torn_bytes > 0 {
            log::warn!("{}: dropping {} bytes of an interrupted append", path.display(), replay.torn_bytes);
            file.set_len(committed_len as u64).map_err(storage)?;
            file.sync_all().map_err(storage)?;
        }
        Ok((Journal { path, file }, replay))
    }

    /// Appends one record and waits until it is on stable storage.
    pub fn append(&mut self, record: &str) -> Result<(), JournalError> {
        let line = frame_line(record);
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|source| JournalError::Storage { path: self.path.clone(), source })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
