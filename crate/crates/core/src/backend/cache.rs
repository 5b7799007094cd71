//! Persistent score cache: an append-only on-disk key→record store.
//!
//! Raw scores are the irreplaceable artifact of a run (models get
//! decommissioned), so every fetched record is written through to a JSONL
//! log keyed by request hash. Writes are serialized; reads take a shared
//! lock.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use super::ScoreRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    /// Requests served from the cache this session.
    pub hits: u64,
    /// Backend calls made this session (cache misses after batch dedupe).
    pub backend_calls: u64,
}

pub struct ScoreCache {
    map: RwLock<HashMap<String, ScoreRecord>>,
    writer: Mutex<Option<BufWriter<File>>>,
    path: Option<PathBuf>,
    hits: AtomicU64,
    backend_calls: AtomicU64,
}

impl ScoreCache {
    /// Open (or create) an on-disk cache at `path`.
    pub fn open(path: &Path) -> Result<ScoreCache> {
        let mut map = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            let reader = BufReader::new(file);
            let lines: Vec<String> = reader
                .lines()
                .collect::<std::io::Result<_>>()
                .map_err(|e| Error::io(path, e))?;
            let last = lines.len().saturating_sub(1);
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<ScoreRecord>(line) {
                    Ok(record) => {
                        map.insert(record.request_key.clone(), record);
                    }
                    // A torn final line means the process died mid-append;
                    // anything earlier is corruption worth failing on.
                    Err(e) if i == last => {
                        let _ = e;
                    }
                    Err(e) => {
                        return Err(Error::MalformedDocument {
                            path: path.to_path_buf(),
                            detail: format!("cache line {}: {e}", i + 1),
                        })
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(ScoreCache {
            map: RwLock::new(map),
            writer: Mutex::new(Some(BufWriter::new(file))),
            path: Some(path.to_path_buf()),
            hits: AtomicU64::new(0),
            backend_calls: AtomicU64::new(0),
        })
    }

    /// A cache that never touches disk.
    pub fn in_memory() -> ScoreCache {
        ScoreCache {
            map: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
            path: None,
            hits: AtomicU64::new(0),
            backend_calls: AtomicU64::new(0),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<ScoreRecord> {
        self.map.read().expect("cache lock").get(key).cloned()
    }

    /// Insert a record and append it to the log.
    pub fn put(&self, record: &ScoreRecord) -> Result<()> {
        {
            let mut writer = self.writer.lock().expect("cache writer lock");
            if let Some(writer) = writer.as_mut() {
                let line = serde_json::to_string(record).expect("record serializes");
                let path = self.path.clone().unwrap_or_default();
                writer
                    .write_all(line.as_bytes())
                    .and_then(|_| writer.write_all(b"\n"))
                    .and_then(|_| writer.flush())
                    .map_err(|e| Error::io(path, e))?;
            }
        }
        self.map
            .write()
            .expect("cache lock")
            .insert(record.request_key.clone(), record.clone());
        Ok(())
    }

    pub(crate) fn record_hits(&self, n: u64) {
        self.hits.fetch_add(n, Ordering::Relaxed);
    }

    pub(crate) fn record_backend_calls(&self, n: u64) {
        self.backend_calls.fetch_add(n, Ordering::Relaxed);
    }

    /// Session counters since this cache handle was opened.
    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            backend_calls: self.backend_calls.load(Ordering::Relaxed),
        }
    }
}
