//! Append-only accountability log.
//!
//! One JSON object per line: `{"seq", "prev_hash", "entry"}`. `prev_hash` is
//! the SHA-256 of the previous line's bytes (all zeros for the first line),
//! so removing, reordering or editing a line breaks the chain at that point
//! in addition to whatever signature it invalidates.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use smcgate_core::wire::verify_entry;
use smcgate_core::{AccountabilityEntry, Certificate};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("accountability log {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    pub seq: u64,
    pub prev_hash: String,
    pub entry: AccountabilityEntry,
}

/// Outcome of re-verifying one line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineStatus {
    /// 1-based line number.
    pub line: usize,
    pub session_id: Option<String>,
    pub problem: Option<String>,
}

impl LineStatus {
    pub fn is_ok(&self) -> bool {
        self.problem.is_none()
    }
}

struct Tail {
    next_seq: u64,
    last_hash: [u8; 32],
}

pub struct AccountabilityLog {
    path: PathBuf,
    tail: Mutex<Tail>,
}

fn line_hash(line: &[u8]) -> [u8; 32] {
    Sha256::digest(line).into()
}

impl AccountabilityLog {
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let io = |source| LogError::Io {
            path: path.to_owned(),
            source,
        };
        OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        let mut tail = Tail {
            next_seq: 0,
            last_hash: [0; 32],
        };
        for line in BufReader::new(File::open(path).map_err(io)?).split(b'\n') {
            let line = line.map_err(io)?;
            if line.is_empty() {
                continue;
            }
            tail.next_seq += 1;
            tail.last_hash = line_hash(&line);
        }
        Ok(Self {
            path: path.to_owned(),
            tail: Mutex::new(tail),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> u64 {
        self.tail.lock().expect("log lock").next_seq
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends one entry; returns its sequence number.
    pub fn append(&self, entry: AccountabilityEntry) -> Result<u64, LogError> {
        let mut tail = self.tail.lock().expect("log lock");
        let record = LogRecord {
            seq: tail.next_seq,
            prev_hash: hex::encode(tail.last_hash),
            entry,
        };
        let line = serde_json::to_vec(&record).expect("log record serializes");
        let mut buf = line.clone();
        buf.push(b'\n');
        let mut f = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|source| LogError::Io {
                path: self.path.clone(),
                source,
            })?;
        f.write_all(&buf).map_err(|source| LogError::Io {
            path: self.path.clone(),
            source,
        })?;
        tail.next_seq += 1;
        tail.last_hash = line_hash(&line);
        Ok(record.seq)
    }

    pub fn records(&self) -> Result<Vec<LogRecord>, LogError> {
        read_records(&self.path)
    }

    pub fn verify(&self, gateway: &Certificate) -> Result<Vec<LineStatus>, LogError> {
        verify_log(&self.path, gateway)
    }
}

/// Parses every well-formed line, skipping corrupt ones.
pub fn read_records(path: &Path) -> Result<Vec<LogRecord>, LogError> {
    let io = |source| LogError::Io {
        path: path.to_owned(),
        source,
    };
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path).map_err(io)?).split(b'\n') {
        let line = line.map_err(io)?;
        if let Ok(r) = serde_json::from_slice::<LogRecord>(&line) {
            out.push(r);
        }
    }
    Ok(out)
}

/// Re-checks chain links and signatures of every line in the log.
pub fn verify_log(path: &Path, gateway: &Certificate) -> Result<Vec<LineStatus>, LogError> {
    let io = |source| LogError::Io {
        path: path.to_owned(),
        source,
    };
    let mut out = Vec::new();
    let mut expected_prev = [0u8; 32];
    let mut expected_seq = 0u64;
    for (i, line) in BufReader::new(File::open(path).map_err(io)?)
        .split(b'\n')
        .enumerate()
    {
        let line = line.map_err(io)?;
        if line.is_empty() {
            continue;
        }
        let mut status = LineStatus {
            line: i + 1,
            session_id: None,
            problem: None,
        };
        match serde_json::from_slice::<LogRecord>(&line) {
            Err(e) => status.problem = Some(format!("unparseable: {e}")),
            Ok(r) => {
                status.session_id = Some(r.entry.session_id.clone());
                if r.prev_hash != hex::encode(expected_prev) {
                    status.problem = Some("hash chain broken".into());
                } else if r.seq != expected_seq {
                    status.problem = Some(format!("sequence {} where {} expected", r.seq, expected_seq));
                } else if let Err(e) = verify_entry(&r.entry, gateway) {
                    status.problem = Some(e.to_string());
                }
            }
        }
        expected_prev = line_hash(&line);
        expected_seq += 1;
        out.push(status);
    }
    Ok(out)
}
