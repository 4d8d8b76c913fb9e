//! The journal file: one JSON entry per line, appended and flushed before
//! the engine applies it.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use ewallet_core::ledger::JournalSink;
use ewallet_core::JournalEntry;

use crate::config::Fsync;

pub struct FileSink {
    file: File,
    fsync: Fsync,
}

impl FileSink {
    pub fn open(path: &Path, fsync: Fsync) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file, fsync })
    }
}

impl JournalSink for FileSink {
    fn append(&mut self, entry: &JournalEntry) -> Result<(), String> {
        let mut line = serde_json::to_string(entry).map_err(|e| e.to_string())?;
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(|e| e.to_string())?;
        self.file.flush().map_err(|e| e.to_string())?;
        if self.fsync == Fsync::Always {
            self.file.sync_data().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("cannot read journal {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("journal {path} line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
}

/// Reads every entry; a missing file is an empty journal.
pub fn read(path: &Path) -> Result<Vec<(usize, JournalEntry)>, JournalError> {
    let io = |source| JournalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            return Err(JournalError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                reason: "blank line".into(),
            });
        }
        let entry = serde_json::from_str(&line).map_err(|e| JournalError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push((i + 1, entry));
    }
    Ok(out)
}
