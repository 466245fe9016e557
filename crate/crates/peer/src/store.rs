//! Local sensor readings.
//!
//! Readings live in memory, keyed by input id, and are optionally mirrored
//! to an append-only JSON-lines file. The file may be appended to by another
//! process (`peer ingest`); [`ReadingStore::refresh`] picks up new lines.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smcgate_core::{Fixed, Preprocessor, Preselector, Timestamp};
use thiserror::Error;

pub const DEFAULT_RETENTION: u64 = 30 * 24 * 3600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reading {
    pub value: Fixed,
    pub timestamp: Timestamp,
}

#[derive(Serialize, Deserialize)]
struct Line {
    input: String,
    value: Fixed,
    timestamp: Timestamp,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("reading for {input:?} at {timestamp} is not after the latest at {latest}")]
    NotIncreasing {
        input: String,
        timestamp: Timestamp,
        latest: Timestamp,
    },
    #[error("no readings for {0:?} in the requested window")]
    EmptyWindow(String),
    #[error("aggregate overflows the fixed-point range")]
    Overflow,
    #[error("readings file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("readings file {path} line {line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
}

#[derive(Debug, Default)]
pub struct ReadingStore {
    series: BTreeMap<String, Vec<Reading>>,
    retention: u64,
    file: Option<PathBuf>,
    read_offset: u64,
    lines_read: usize,
}

impl ReadingStore {
    pub fn in_memory() -> Self {
        Self {
            retention: DEFAULT_RETENTION,
            ..Default::default()
        }
    }

    /// Opens (creating if needed) a store backed by `path`.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let mut s = Self {
            retention: DEFAULT_RETENTION,
            file: Some(path.to_owned()),
            ..Default::default()
        };
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| s.io(e))?;
        s.refresh()?;
        Ok(s)
    }

    pub fn with_retention(mut self, seconds: u64) -> Self {
        self.retention = seconds;
        self
    }

    fn io(&self, source: std::io::Error) -> StoreError {
        StoreError::Io {
            path: self.file.clone().unwrap_or_default(),
            source,
        }
    }

    /// Loads lines appended to the backing file since the last call.
    pub fn refresh(&mut self) -> Result<(), StoreError> {
        let Some(path) = self.file.clone() else {
            return Ok(());
        };
        let mut f = File::open(&path).map_err(|e| self.io(e))?;
        let len = f.metadata().map_err(|e| self.io(e))?.len();
        if len <= self.read_offset {
            return Ok(());
        }
        f.seek(SeekFrom::Start(self.read_offset)).map_err(|e| self.io(e))?;
        let mut reader = BufReader::new(f);
        let mut buf = String::new();
        loop {
            buf.clear();
            let n = reader.read_line(&mut buf).map_err(|e| self.io(e))?;
            // Stop at a partial trailing line; it is re-read once complete.
            if n == 0 || !buf.ends_with('\n') {
                break;
            }
            self.read_offset += n as u64;
            self.lines_read += 1;
            if buf.trim().is_empty() {
                continue;
            }
            let line: Line = serde_json::from_str(&buf).map_err(|source| StoreError::Parse {
                path: path.clone(),
                line: self.lines_read,
                source,
            })?;
            // Lines already in the file were validated by their writer.
            let _ = self.insert(&line.input, line.value, line.timestamp);
        }
        Ok(())
    }

    fn insert(&mut self, input: &str, value: Fixed, timestamp: Timestamp) -> Result<(), StoreError> {
        let series = self.series.entry(input.to_owned()).or_default();
        if let Some(last) = series.last() {
            if timestamp <= last.timestamp {
                return Err(StoreError::NotIncreasing {
                    input: input.to_owned(),
                    timestamp,
                    latest: last.timestamp,
                });
            }
        }
        series.push(Reading { value, timestamp });
        Ok(())
    }

    /// Appends a reading; timestamps must increase strictly per input.
    pub fn append(&mut self, input: &str, value: Fixed, timestamp: Timestamp) -> Result<(), StoreError> {
        self.refresh()?;
        self.insert(input, value, timestamp)?;
        if let Some(path) = self.file.clone() {
            let line = Line {
                input: input.to_owned(),
                value,
                timestamp,
            };
            let mut bytes = serde_json::to_vec(&line).expect("reading serializes");
            bytes.push(b'\n');
            let mut f = OpenOptions::new()
                .append(true)
                .open(&path)
                .map_err(|e| self.io(e))?;
            f.write_all(&bytes).map_err(|e| self.io(e))?;
            self.read_offset += bytes.len() as u64;
            self.lines_read += 1;
        }
        Ok(())
    }

    /// Drops in-memory readings older than the retention period.
    pub fn prune(&mut self, now: Timestamp) {
        let cutoff = now.saturating_sub(self.retention);
        for series in self.series.values_mut() {
            let keep = series.partition_point(|r| r.timestamp < cutoff);
            series.drain(..keep);
        }
    }

    pub fn inputs(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    pub fn series(&self, input: &str) -> &[Reading] {
        self.series.get(input).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.series.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Readings of `input` selected by the window, oldest first.
    ///
    /// `LastValue` takes the newest reading at or before `now`; the other
    /// windows take every reading with timestamp in `(now - W, now]`.
    pub fn preselect(
        &self,
        input: &str,
        preselector: Preselector,
        now: Timestamp,
    ) -> Result<Vec<Reading>, StoreError> {
        let series = self.series(input);
        let upto = series.partition_point(|r| r.timestamp <= now);
        let selected = match preselector.window() {
            None => series[..upto].last().map(|r| vec![*r]).unwrap_or_default(),
            Some(w) => {
                let from = series.partition_point(|r| r.timestamp + w <= now);
                series[from.min(upto)..upto].to_vec()
            }
        };
        if selected.is_empty() {
            return Err(StoreError::EmptyWindow(input.to_owned()));
        }
        Ok(selected)
    }
}

/// Collapses a non-empty series into one contribution.
pub fn preprocess(series: &[Reading], f: Preprocessor) -> Result<Fixed, StoreError> {
    let values = series.iter().map(|r| r.value);
    let out = match f {
        Preprocessor::Min => values.min(),
        Preprocessor::Max => values.max(),
        Preprocessor::Sum if series.is_empty() => None,
        Preprocessor::Sum => Some(Fixed::checked_sum(values).ok_or(StoreError::Overflow)?),
        Preprocessor::Average => {
            let v: Vec<Fixed> = values.collect();
            if v.is_empty() {
                None
            } else {
                Some(Fixed::mean(&v).ok_or(StoreError::Overflow)?)
            }
        }
    };
    out.ok_or_else(|| StoreError::EmptyWindow(String::new()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fx(s: &str) -> Fixed {
        s.parse().unwrap()
    }

    fn series(values: &[&str]) -> Vec<Reading> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| Reading {
                value: fx(v),
                timestamp: i as u64,
            })
            .collect()
    }

    #[test]
    fn last_value_is_newest() {
        let mut s = ReadingStore::in_memory();
        for t in [10, 20, 30] {
            s.append("x", Fixed::from_int(t as i64).unwrap(), t).unwrap();
        }
        let got = s.preselect("x", Preselector::LastValue, 35).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].timestamp, 30);
        // Readings after `now` are not visible.
        assert_eq!(s.preselect("x", Preselector::LastValue, 25).unwrap()[0].timestamp, 20);
    }

    #[test]
    fn six_hour_window_over_hourly_readings() {
        let mut s = ReadingStore::in_memory();
        let now = 100_000;
        for h in (0..8).rev() {
            s.append("x", Fixed::from_int(h).unwrap(), now - h as u64 * 3600).unwrap();
        }
        let got = s.preselect("x", Preselector::Last6Hours, now).unwrap();
        assert_eq!(got.len(), 6);
        assert_eq!(got.last().unwrap().timestamp, now);
        assert_eq!(got[0].timestamp, now - 5 * 3600);
        assert_eq!(s.preselect("x", Preselector::LastHour, now).unwrap().len(), 1);
        assert_eq!(s.preselect("x", Preselector::Last24Hours, now).unwrap().len(), 8);
    }

    #[test]
    fn empty_window() {
        let s = ReadingStore::in_memory();
        assert!(matches!(
            s.preselect("x", Preselector::LastValue, 10),
            Err(StoreError::EmptyWindow(_))
        ));
    }

    #[test]
    fn aggregates() {
        assert_eq!(preprocess(&series(&["2", "4", "6"]), Preprocessor::Average).unwrap().to_string(), "4.000");
        assert_eq!(preprocess(&series(&["7"]), Preprocessor::Min).unwrap(), fx("7"));
        assert_eq!(preprocess(&series(&["1.5", "2.25"]), Preprocessor::Sum).unwrap().to_string(), "3.750");
        assert_eq!(preprocess(&series(&["3", "-1", "2"]), Preprocessor::Max).unwrap(), fx("3"));
        assert_eq!(preprocess(&series(&["1", "2"]), Preprocessor::Average).unwrap(), fx("1.5"));
        assert!(preprocess(&[], Preprocessor::Sum).is_err());
    }

    #[test]
    fn timestamps_strictly_increase_per_input() {
        let mut s = ReadingStore::in_memory();
        s.append("a", fx("1"), 10).unwrap();
        s.append("b", fx("1"), 5).unwrap();
        assert!(matches!(s.append("a", fx("1"), 10), Err(StoreError::NotIncreasing { .. })));
        assert!(s.append("a", fx("1"), 9).is_err());
    }

    #[test]
    fn file_backed_store_sees_external_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("readings.jsonl");
        let mut a = ReadingStore::open(&path).unwrap();
        a.append("x", fx("1"), 1).unwrap();
        let mut b = ReadingStore::open(&path).unwrap();
        assert_eq!(b.len(), 1);
        b.append("x", fx("2"), 2).unwrap();
        a.refresh().unwrap();
        assert_eq!(a.series("x").len(), 2);
        assert!(a.append("x", fx("3"), 2).is_err());
    }

    #[test]
    fn retention_prunes_old_readings() {
        let mut s = ReadingStore::in_memory().with_retention(100);
        s.append("x", fx("1"), 10).unwrap();
        s.append("x", fx("2"), 150).unwrap();
        s.prune(200);
        assert_eq!(s.series("x").len(), 1);
    }
}
