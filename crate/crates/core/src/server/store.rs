//! File-backed persistence: `journal.log` holds one JSON mutation per line,
//! `snapshot.json` the full state as of some journal sequence number.
//!
//! Restore loads the snapshot and replays journal entries newer than it. A
//! snapshot is written to a temporary file and renamed into place before the
//! journal is truncated, so a crash in between leaves only stale entries that
//! replay skips. A torn final journal line (no trailing newline) is dropped.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::state::{JournalEntry, ServerState};

pub const JOURNAL_FILE: &str = "journal.log";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt {file} at line {line}: {message}")]
    Corrupt { file: &'static str, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_owned(), source }
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    journal: File,
    since_snapshot: u64,
    snapshot_every: u64,
}

impl Store {
    /// Opens (creating if needed) a data directory and returns the restored state.
    pub fn open(dir: &Path, snapshot_every: u64) -> Result<(Self, ServerState), StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let snapshot_path = dir.join(SNAPSHOT_FILE);
        let mut state = match fs::read_to_string(&snapshot_path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                file: SNAPSHOT_FILE,
                line: e.line(),
                message: e.to_string(),
            })?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => ServerState::new(),
            Err(e) => return Err(StoreError::Io { path: snapshot_path, source: e }),
        };

        let journal_path = dir.join(JOURNAL_FILE);
        let mut replayed = 0;
        let mut valid_len: u64 = 0;
        if journal_path.exists() {
            let file = File::open(&journal_path).map_err(io_err(&journal_path))?;
            let mut reader = BufReader::new(file);
            let mut line = String::new();
            let mut line_no = 0;
            loop {
                line.clear();
                let n = reader.read_line(&mut line).map_err(io_err(&journal_path))?;
                if n == 0 {
                    break;
                }
                line_no += 1;
                if !line.ends_with('\n') {
                    // Torn write at the tail.
                    break;
                }
                let entry: JournalEntry = serde_json::from_str(line.trim_end()).map_err(|e| StoreError::Corrupt {
                    file: JOURNAL_FILE,
                    line: line_no,
                    message: e.to_string(),
                })?;
                valid_len += n as u64;
                if entry.seq > state.journal_seq {
                    state.apply(entry.seq, &entry.mutation);
                    replayed += 1;
                }
            }
        }

        let journal =
            OpenOptions::new().create(true).append(true).open(&journal_path).map_err(io_err(&journal_path))?;
        journal.set_len(valid_len).map_err(io_err(&journal_path))?;
        Ok((Self { dir: dir.to_owned(), journal, since_snapshot: replayed, snapshot_every }, state))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Appends one entry as a single write of one line.
    pub fn append(&mut self, entry: &JournalEntry) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(entry).expect("journal entries serialize");
        line.push('\n');
        let path = self.dir.join(JOURNAL_FILE);
        self.journal.write_all(line.as_bytes()).map_err(io_err(&path))?;
        self.journal.flush().map_err(io_err(&path))?;
        self.since_snapshot += 1;
        Ok(())
    }

    pub fn snapshot_due(&self) -> bool {
        self.snapshot_every > 0 && self.since_snapshot >= self.snapshot_every
    }

    pub fn write_snapshot(&mut self, state: &ServerState) -> Result<(), StoreError> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let target = self.dir.join(SNAPSHOT_FILE);
        let bytes = serde_json::to_vec_pretty(state).expect("state serializes");
        {
            let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(&bytes).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &target).map_err(io_err(&target))?;
        let journal_path = self.dir.join(JOURNAL_FILE);
        self.journal.set_len(0).map_err(io_err(&journal_path))?;
        self.since_snapshot = 0;
        Ok(())
    }
}
