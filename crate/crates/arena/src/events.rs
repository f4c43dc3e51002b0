//! Append-only event log in JSON lines, plus snapshots.
//!
//! Every state change is an event. The log is the source of truth; the
//! in-memory state is whatever replaying it produces.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use arena_core::domain::{
    BattleId, BenchmarkScore, Judgment, ModelId, Participant, ParticipantId, Slot, Timestamp,
    Turn,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::ArenaState;

pub const LOG_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("storage io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt event at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("event sequence out of order: {got} after {last}")]
    OutOfOrder { last: u64, got: u64 },
    #[error("snapshot is unreadable: {0}")]
    Snapshot(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StorageError + '_ {
    move |source| StorageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Registration {
        participant: Participant,
    },
    BattleCreated {
        battle_id: BattleId,
        participant_id: ParticipantId,
        slot_a: ModelId,
        slot_b: ModelId,
        #[serde(default)]
        control_slot: Option<Slot>,
        /// Open battle of the same participant closed unjudged by this one.
        #[serde(default)]
        discarded: Option<BattleId>,
    },
    Turn {
        battle_id: BattleId,
        /// `None` when a backend timed out: the turn is void and the battle
        /// becomes degraded.
        turn: Option<Turn>,
        #[serde(default)]
        timed_out: Option<Slot>,
    },
    Judgment {
        battle_id: BattleId,
        judgment: Judgment,
    },
    Ban {
        participant_id: ParticipantId,
    },
    Unban {
        participant_id: ParticipantId,
    },
    ConfigChange {
        change: ConfigChange,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "key", rename_all = "snake_case")]
pub enum ConfigChange {
    /// Replaces the ingested benchmark table.
    Benchmarks { scores: Vec<BenchmarkScore> },
    ModelActive { model_id: ModelId, active: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogEntry {
    pub seq: u64,
    pub timestamp: Timestamp,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    last_seq: u64,
    state: ArenaState,
}

/// Writer half of the log. Only one exists per storage directory.
pub struct EventLog {
    dir: PathBuf,
    writer: BufWriter<File>,
    last_seq: u64,
    snapshot_every: u64,
    since_snapshot: u64,
}

/// Result of opening a storage directory.
pub struct Recovered {
    pub log: EventLog,
    pub state: ArenaState,
    /// Events replayed on top of the snapshot.
    pub replayed: usize,
    /// Bytes dropped from a torn trailing line.
    pub truncated_bytes: u64,
}

impl EventLog {
    /// Opens (or creates) the log in `dir`, loads the snapshot if any and
    /// replays the remaining events onto `initial`.
    ///
    /// A final line without its newline is what a crash mid-write leaves
    /// behind; it is cut off. Any other malformed line is an error.
    pub fn open(
        dir: &Path,
        initial: ArenaState,
        snapshot_every: u64,
    ) -> Result<Recovered, StorageError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let log_path = dir.join(LOG_FILE);
        let snap_path = dir.join(SNAPSHOT_FILE);

        let (mut state, snap_seq) = match fs::read(&snap_path) {
            Ok(bytes) => {
                let snap: Snapshot = serde_json::from_slice(&bytes)
                    .map_err(|e| StorageError::Snapshot(e.to_string()))?;
                (snap.state, snap.last_seq)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => (initial, 0),
            Err(e) => return Err(io_err(&snap_path)(e)),
        };

        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;
        let (entries, valid_len, total_len) = read_entries(&file, &log_path)?;
        let truncated_bytes = total_len - valid_len;
        if truncated_bytes > 0 {
            file.set_len(valid_len).map_err(io_err(&log_path))?;
            file.seek(SeekFrom::End(0)).map_err(io_err(&log_path))?;
        }

        let mut last_seq = snap_seq;
        let mut replayed = 0;
        for entry in entries {
            if entry.seq <= snap_seq {
                continue;
            }
            if entry.seq <= last_seq {
                return Err(StorageError::OutOfOrder {
                    last: last_seq,
                    got: entry.seq,
                });
            }
            last_seq = entry.seq;
            state.apply(&entry);
            replayed += 1;
        }
        Ok(Recovered {
            log: EventLog {
                dir: dir.to_path_buf(),
                writer: BufWriter::new(file),
                last_seq,
                snapshot_every,
                since_snapshot: replayed as u64,
            },
            state,
            replayed,
            truncated_bytes,
        })
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn next_seq(&self) -> u64 {
        self.last_seq + 1
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Appends one event and flushes it to the OS before returning.
    pub fn append(&mut self, timestamp: Timestamp, event: Event) -> Result<EventLogEntry, StorageError> {
        let entry = EventLogEntry {
            seq: self.last_seq + 1,
            timestamp,
            event,
        };
        let path = self.dir.join(LOG_FILE);
        let mut line = serde_json::to_vec(&entry).expect("events always serialize");
        line.push(b'\n');
        self.writer.write_all(&line).map_err(io_err(&path))?;
        self.writer.flush().map_err(io_err(&path))?;
        self.last_seq = entry.seq;
        self.since_snapshot += 1;
        Ok(entry)
    }

    pub fn snapshot_due(&self) -> bool {
        self.snapshot_every > 0 && self.since_snapshot >= self.snapshot_every
    }

    /// Writes `state` (which must reflect every appended event) atomically.
    pub fn write_snapshot(&mut self, state: &ArenaState) -> Result<(), StorageError> {
        let path = self.dir.join(SNAPSHOT_FILE);
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let snap = Snapshot {
            last_seq: self.last_seq,
            state: state.clone(),
        };
        let bytes = serde_json::to_vec(&snap).expect("state always serializes");
        fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        self.since_snapshot = 0;
        Ok(())
    }

    pub fn sync(&mut self) -> Result<(), StorageError> {
        let path = self.dir.join(LOG_FILE);
        self.writer.flush().map_err(io_err(&path))?;
        self.writer.get_ref().sync_all().map_err(io_err(&path))
    }
}

/// All complete entries, the byte length they span, and the file length.
fn read_entries(file: &File, path: &Path) -> Result<(Vec<EventLogEntry>, u64, u64), StorageError> {
    let mut reader = BufReader::new(file);
    reader.seek(SeekFrom::Start(0)).map_err(io_err(path))?;
    let mut entries = Vec::new();
    let mut valid = 0u64;
    let mut total = 0u64;
    let mut line = Vec::new();
    let mut number = 0;
    loop {
        line.clear();
        let n = reader.read_until(b'\n', &mut line).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        number += 1;
        total += n as u64;
        if line.last() != Some(&b'\n') {
            // torn tail
            break;
        }
        let body = &line[..line.len() - 1];
        if body.iter().all(u8::is_ascii_whitespace) {
            valid = total;
            continue;
        }
        let entry: EventLogEntry = serde_json::from_slice(body).map_err(|e| StorageError::Corrupt {
            line: number,
            message: e.to_string(),
        })?;
        entries.push(entry);
        valid = total;
    }
    Ok((entries, valid, total))
}

/// Reads every entry of a log file without touching it.
pub fn read_log(dir: &Path) -> Result<Vec<EventLogEntry>, StorageError> {
    let path = dir.join(LOG_FILE);
    let file = File::open(&path).map_err(io_err(&path))?;
    read_entries(&file, &path).map(|(e, _, _)| e)
}
