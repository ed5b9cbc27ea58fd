//! File-backed transparency log.
//!
//! The file is a sequence of `len (8 bytes, big endian) || JSON(entry)`
//! records. Opening it drops a torn final record and replays the rest through
//! the log's invariant checks. [`SharedLog`] serves many readers, serializes
//! writers per URL and funnels every append through one file handle.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use accjs_core::crypto::{Principal, Registry};
use accjs_core::log::{decode_records, encode_record, LogEntry, LogError, StapledProof, Submission, TransparencyLog};
use accjs_core::time::Timestamp;
use accjs_core::url::strip_query;
use parking_lot::{Mutex, RwLock};

use crate::Error;

/// Exclusive append handle on a log file.
#[derive(Debug)]
pub struct LogFile {
    path: PathBuf,
    file: File,
}

impl LogFile {
    /// Opens or creates `path`, truncating an incomplete trailing record.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<LogEntry>), Error> {
        let path = path.as_ref().to_path_buf();
        let io = |e| Error::io(&path, e);
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path).map_err(io)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io)?;
        let decoded = decode_records(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if decoded.valid_len < bytes.len() {
            file.set_len(decoded.valid_len as u64).map_err(io)?;
            file.sync_all().map_err(io)?;
        }
        Ok((Self { path, file }, decoded.entries))
    }

    pub fn append(&mut self, entry: &LogEntry) -> Result<(), Error> {
        self.file.write_all(&encode_record(entry)).map_err(|e| Error::io(&self.path, e))?;
        self.file.sync_data().map_err(|e| Error::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Reads every complete record without modifying the file. A missing file is
/// an empty log.
pub fn read_log_file(path: impl AsRef<Path>) -> Result<Vec<LogEntry>, Error> {
    let path = path.as_ref();
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    decode_records(&bytes).map(|d| d.entries).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// A transparency log shared between threads.
pub struct SharedLog {
    key: Principal,
    state: RwLock<TransparencyLog>,
    url_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    file: Mutex<Option<LogFile>>,
}

impl SharedLog {
    pub fn in_memory(key: Principal) -> Self {
        Self::with_state(key.clone(), TransparencyLog::new(key), None)
    }

    /// Opens the log stored at `path`, creating it if needed.
    pub fn open(key: Principal, path: impl AsRef<Path>) -> Result<Self, Error> {
        let (file, entries) = LogFile::open(path)?;
        let log = TransparencyLog::from_entries(key.clone(), entries)?;
        Ok(Self::with_state(key, log, Some(file)))
    }

    fn with_state(key: Principal, log: TransparencyLog, file: Option<LogFile>) -> Self {
        Self { key, state: RwLock::new(log), url_locks: Mutex::new(HashMap::new()), file: Mutex::new(file) }
    }

    fn url_lock(&self, url: &str) -> Arc<Mutex<()>> {
        self.url_locks.lock().entry(strip_query(url).to_string()).or_default().clone()
    }

    /// Verifies and appends a submission. Submissions for the same URL are
    /// serialized; the append itself is atomic with respect to readers.
    pub fn submit(&self, sub: &Submission, registry: &Registry, now: Timestamp) -> Result<LogEntry, Error> {
        let lock = self.url_lock(&sub.envelope.request_url);
        let _guard = lock.lock();
        self.state.read().precheck(sub, registry, now)?;
        let mut state = self.state.write();
        let entry = state.submit(sub, registry, now)?;
        if let Some(file) = self.file.lock().as_mut() {
            if let Err(e) = file.append(&entry) {
                let mut kept = state.entries().to_vec();
                kept.pop();
                *state = TransparencyLog::from_entries(self.key.clone(), kept).expect("prefix of a valid log is valid");
                return Err(e);
            }
        }
        Ok(entry)
    }

    pub fn latest(&self, url: &str) -> Option<LogEntry> {
        self.state.read().latest(url).cloned()
    }

    pub fn history(&self, url: &str) -> Vec<LogEntry> {
        self.state.read().audit_history(url).into_iter().cloned().collect()
    }

    pub fn staple(&self, url: &str, now: Timestamp, window: u64) -> Result<StapledProof, LogError> {
        self.state.read().staple(url, now, window)
    }

    pub fn entries(&self) -> Vec<LogEntry> {
        self.state.read().entries().to_vec()
    }

    pub fn len(&self) -> usize {
        self.state.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cert_id(&self) -> &str {
        &self.key.cert_id
    }

    /// Runs `f` against a consistent view of the log.
    pub fn read<R>(&self, f: impl FnOnce(&TransparencyLog) -> R) -> R {
        f(&self.state.read())
    }
}
