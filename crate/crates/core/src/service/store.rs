//! Append-only JSON-lines result cache with snapshot reads.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::relevance::Strategy;
use crate::triage::ClassificationResult;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub reply_id: String,
    pub pipeline_version: String,
    pub toxicity_model_id: String,
    pub relevance_strategy: Strategy,
    pub relevance_model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub value: ClassificationResult,
    pub written_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("cache {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cache {path} line {line}: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
}

/// The results currently served, keyed by reply id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    pub pipeline_version: String,
    pub results: BTreeMap<String, ClassificationResult>,
}

/// Cached classifications. Entries are immutable: the first entry written
/// for a key wins and is never rewritten. Readers get whole snapshots, so a
/// feed never sees a partially committed run.
pub struct ResultStore {
    path: Option<PathBuf>,
    entries: RwLock<BTreeMap<CacheKey, CacheEntry>>,
    snapshot: RwLock<Arc<Snapshot>>,
    writer: Mutex<Option<File>>,
}

impl ResultStore {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: RwLock::new(BTreeMap::new()),
            snapshot: RwLock::new(Arc::new(Snapshot::default())),
            writer: Mutex::new(None),
        }
    }

    /// Opens (or creates) the cache file. A torn final line, as left by a
    /// crash mid-append, is ignored; any other unreadable line is an error.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let io = |source| StoreError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let mut entries = BTreeMap::new();
        let mut torn_tail = false;
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io)?);
            let lines: Vec<String> = reader.lines().collect::<Result<_, _>>().map_err(io)?;
            let last = lines.len();
            for (i, line) in lines.into_iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheEntry>(&line) {
                    Ok(e) => {
                        entries.entry(e.key.clone()).or_insert(e);
                    }
                    Err(err) if i + 1 == last => {
                        log::warn!("ignoring torn final cache line in {}: {err}", path.display());
                        torn_tail = true;
                    }
                    Err(err) => {
                        return Err(StoreError::Corrupt {
                            path: path.display().to_string(),
                            line: i + 1,
                            message: err.to_string(),
                        })
                    }
                }
            }
        }
        if torn_tail {
            // rewrite without the torn line so later appends stay line-aligned
            let mut f = File::create(path).map_err(io)?;
            for e in entries.values() {
                writeln!(f, "{}", serde_json::to_string(e).expect("entry serializes")).map_err(io)?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            snapshot: RwLock::new(Arc::new(Snapshot::default())),
            writer: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn lookup(&self, key: &CacheKey) -> Option<ClassificationResult> {
        self.entries
            .read()
            .expect("store lock")
            .get(key)
            .map(|e| e.value.clone())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("store lock").clone()
    }

    /// Appends `new_entries` (skipping keys already present) and publishes
    /// `view` as the new snapshot. Holding the writer lock serializes commits.
    pub fn commit(&self, new_entries: Vec<CacheEntry>, view: Snapshot) -> Result<(), StoreError> {
        let mut writer = self.writer.lock().expect("writer lock");
        let fresh: Vec<CacheEntry> = {
            let entries = self.entries.read().expect("store lock");
            new_entries
                .into_iter()
                .filter(|e| !entries.contains_key(&e.key))
                .collect()
        };
        if let Some(file) = writer.as_mut() {
            let io = |source| StoreError::Io {
                path: self.path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                source,
            };
            let mut buf = String::new();
            for e in &fresh {
                buf.push_str(&serde_json::to_string(e).expect("entry serializes"));
                buf.push('\n');
            }
            file.write_all(buf.as_bytes()).map_err(io)?;
            file.sync_data().map_err(io)?;
        }
        {
            let mut entries = self.entries.write().expect("store lock");
            for e in fresh {
                entries.entry(e.key.clone()).or_insert(e);
            }
        }
        *self.snapshot.write().expect("store lock") = Arc::new(view);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str) -> CacheEntry {
        CacheEntry {
            key: CacheKey {
                reply_id: id.into(),
                pipeline_version: "v".into(),
                toxicity_model_id: "t".into(),
                relevance_strategy: Strategy::Keyword,
                relevance_model_id: "k".into(),
            },
            value: ClassificationResult::unclassified(id, "v"),
            written_at: "2024-01-01T00:00:00Z".parse().unwrap(),
        }
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let s = ResultStore::open(&path).unwrap();
        s.commit(vec![entry("a"), entry("b")], Snapshot::default()).unwrap();
        drop(s);
        let s = ResultStore::open(&path).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.lookup(&entry("a").key), Some(entry("a").value));
    }

    #[test]
    fn entries_are_never_rewritten() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let s = ResultStore::open(&path).unwrap();
        s.commit(vec![entry("a")], Snapshot::default()).unwrap();
        let mut other = entry("a");
        other.value.pipeline_version = "changed".into();
        s.commit(vec![other], Snapshot::default()).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
        assert_eq!(s.lookup(&entry("a").key).unwrap().pipeline_version, "v");
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let line = serde_json::to_string(&entry("a")).unwrap();
        std::fs::write(&path, format!("{line}\n{{\"key\":")).unwrap();
        let s = ResultStore::open(&path).unwrap();
        assert_eq!(s.len(), 1);
        s.commit(vec![entry("b")], Snapshot::default()).unwrap();
        drop(s);
        assert_eq!(ResultStore::open(&path).unwrap().len(), 2);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let line = serde_json::to_string(&entry("a")).unwrap();
        std::fs::write(&path, format!("garbage\n{line}\n")).unwrap();
        assert!(matches!(
            ResultStore::open(&path),
            Err(StoreError::Corrupt { line: 1, .. })
        ));
    }
}
