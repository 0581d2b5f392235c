//! Run-scoped artifact persistence with an atomic local-directory backend.
//!
//! Layout under the store root:
//!
//! ```text
//! root/
//!   corpora/<corpus>/{train.txt, valid.txt, manifest.json}
//!   <run_id>/
//!     run.json            run identity
//!     config.json         evolution + training configuration
//!     tokenizer.json
//!     streams/{train.bin, valid.bin}
//!     generations/g<N>/individual_<M>.json
//!     checkpoints.csv
//!     reports/...
//! ```
//!
//! Writes go to a temp file in the destination directory and are renamed
//! into place, so readers never observe partial artifacts. A remote object
//! store can implement [`ArtifactStore`] with the same contracts; only the
//! local backend ships here.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, Utc};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("artifact {kind:?}/{key} already exists for run {run} (pass overwrite to replace)")]
    Conflict {
        run: String,
        kind: ArtifactKind,
        key: String,
    },
    #[error("missing artifact {kind:?}/{key} for run {run}")]
    Missing {
        run: String,
        kind: ArtifactKind,
        key: String,
    },
    #[error("run {0} not found")]
    RunNotFound(String),
    #[error("corrupt artifact {path}: {msg}")]
    Corrupt { path: PathBuf, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Identity of one simulation run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunId {
    pub simulation_id: String,
    pub created_at: DateTime<Utc>,
    pub corpus: String,
    pub method: String,
}

static RUN_COUNTER: AtomicU64 = AtomicU64::new(0);

impl RunId {
    /// Fresh unique id; the embedded timestamp plus a random suffix makes
    /// collisions across processes vanishingly unlikely.
    pub fn new(corpus: &str, method: &str) -> Self {
        let created_at = Utc::now();
        let counter = RUN_COUNTER.fetch_add(1, Ordering::Relaxed);
        let mut suffix = [0u8; 4];
        rand::rng().fill_bytes(&mut suffix);
        let mut hex = String::with_capacity(8);
        for b in suffix {
            let _ = write!(hex, "{b:02x}");
        }
        Self {
            simulation_id: format!(
                "{}-{}-{}-{counter:03}-{hex}",
                corpus,
                method,
                created_at.format("%Y%m%dT%H%M%S%3f")
            ),
            created_at,
            corpus: corpus.to_string(),
            method: method.to_string(),
        }
    }
}

/// Artifact families, each mapped to a fixed subdirectory of the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArtifactKind {
    /// Run identity and configuration at the run root.
    Meta,
    Tokenizer,
    Stream,
    Generation,
    Checkpoints,
    Report,
    Analysis,
}

impl ArtifactKind {
    fn subdir(self) -> &'static str {
        match self {
            ArtifactKind::Meta => "",
            ArtifactKind::Tokenizer => "",
            ArtifactKind::Stream => "streams",
            ArtifactKind::Generation => "generations",
            ArtifactKind::Checkpoints => "",
            ArtifactKind::Report => "reports",
            ArtifactKind::Analysis => "analysis",
        }
    }
}

/// Backend contract: durable puts, byte-exact gets, stable ordered listing.
pub trait ArtifactStore {
    fn put(
        &self,
        run: &RunId,
        kind: ArtifactKind,
        key: &str,
        payload: &[u8],
        overwrite: bool,
    ) -> Result<(), StoreError>;
    fn get(&self, run: &RunId, kind: ArtifactKind, key: &str) -> Result<Vec<u8>, StoreError>;
    fn exists(&self, run: &RunId, kind: ArtifactKind, key: &str) -> bool;
    /// Keys under one artifact kind, sorted.
    fn list(&self, run: &RunId, kind: ArtifactKind) -> Result<Vec<String>, StoreError>;
    /// All runs in creation order, optionally filtered by corpus and/or
    /// method.
    fn list_runs(
        &self,
        corpus: Option<&str>,
        method: Option<&str>,
    ) -> Result<Vec<RunId>, StoreError>;
}

/// Local-filesystem backend.
pub struct LocalStore {
    root: PathBuf,
}

const RUN_META: &str = "run.json";

impl LocalStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Registers a new run directory with its `run.json`.
    pub fn create_run(&self, run: &RunId) -> Result<(), StoreError> {
        let dir = self.run_dir(run);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let payload = serde_json::to_vec_pretty(run).expect("run id serializes");
        self.put(run, ArtifactKind::Meta, RUN_META, &payload, false)
    }

    fn run_dir(&self, run: &RunId) -> PathBuf {
        self.root.join(&run.simulation_id)
    }

    fn artifact_path(&self, run: &RunId, kind: ArtifactKind, key: &str) -> PathBuf {
        let mut p = self.run_dir(run);
        let sub = kind.subdir();
        if !sub.is_empty() {
            p = p.join(sub);
        }
        for part in key.split('/') {
            p = p.join(part);
        }
        p
    }

    /// Corpus artifacts are shared across runs and live outside run dirs.
    pub fn corpus_dir(&self, corpus: &str) -> PathBuf {
        self.root.join("corpora").join(corpus)
    }

    /// Writes a file shared across runs (corpus splits, cross-run analysis)
    /// with the same atomic protocol as run artifacts.
    pub fn put_shared_file(
        &self,
        rel_dir: &str,
        name: &str,
        payload: &[u8],
        overwrite: bool,
    ) -> Result<(), StoreError> {
        let path = self.root.join(rel_dir).join(name);
        if path.exists() && !overwrite {
            return Err(StoreError::Conflict {
                run: rel_dir.to_string(),
                kind: ArtifactKind::Meta,
                key: name.to_string(),
            });
        }
        atomic_write(&path, payload)
    }

    pub fn get_shared_file(&self, rel_dir: &str, name: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.root.join(rel_dir).join(name);
        fs::read(&path).map_err(|_| StoreError::Missing {
            run: rel_dir.to_string(),
            kind: ArtifactKind::Meta,
            key: name.to_string(),
        })
    }

    pub fn put_corpus_file(
        &self,
        corpus: &str,
        name: &str,
        payload: &[u8],
        overwrite: bool,
    ) -> Result<(), StoreError> {
        self.put_shared_file(&format!("corpora/{corpus}"), name, payload, overwrite)
    }

    pub fn get_corpus_file(&self, corpus: &str, name: &str) -> Result<Vec<u8>, StoreError> {
        self.get_shared_file(&format!("corpora/{corpus}"), name)
    }

    /// Latest run for `(corpus, method)`, when any exists.
    pub fn latest_run(&self, corpus: &str, method: &str) -> Result<Option<RunId>, StoreError> {
        let mut runs = self.list_runs(Some(corpus), Some(method))?;
        Ok(runs.pop())
    }

    pub fn find_run(&self, simulation_id: &str) -> Result<RunId, StoreError> {
        let path = self.root.join(simulation_id).join(RUN_META);
        let bytes = fs::read(&path).map_err(|_| StoreError::RunNotFound(simulation_id.into()))?;
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
            path,
            msg: e.to_string(),
        })
    }
}

/// Writes via a unique temp file in the same directory, then renames into
/// place; a crash mid-write leaves only an orphaned `.tmp-` file that
/// readers and listings ignore.
fn atomic_write(path: &Path, payload: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().expect("artifact paths have parents");
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut nonce = [0u8; 8];
    rand::rng().fill_bytes(&mut nonce);
    let mut hex = String::with_capacity(16);
    for b in nonce {
        let _ = write!(hex, "{b:02x}");
    }
    let file_name = path
        .file_name()
        .expect("artifact paths have file names")
        .to_string_lossy();
    let tmp = dir.join(format!(".tmp-{hex}-{file_name}"));
    fs::write(&tmp, payload).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl ArtifactStore for LocalStore {
    fn put(
        &self,
        run: &RunId,
        kind: ArtifactKind,
        key: &str,
        payload: &[u8],
        overwrite: bool,
    ) -> Result<(), StoreError> {
        assert!(!key.is_empty(), "artifact key must be non-empty");
        let path = self.artifact_path(run, kind, key);
        if path.exists() && !overwrite {
            return Err(StoreError::Conflict {
                run: run.simulation_id.clone(),
                kind,
                key: key.to_string(),
            });
        }
        atomic_write(&path, payload)
    }

    fn get(&self, run: &RunId, kind: ArtifactKind, key: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.artifact_path(run, kind, key);
        fs::read(&path).map_err(|_| StoreError::Missing {
            run: run.simulation_id.clone(),
            kind,
            key: key.to_string(),
        })
    }

    fn exists(&self, run: &RunId, kind: ArtifactKind, key: &str) -> bool {
        self.artifact_path(run, kind, key).exists()
    }

    fn list(&self, run: &RunId, kind: ArtifactKind) -> Result<Vec<String>, StoreError> {
        let base = {
            let sub = kind.subdir();
            if sub.is_empty() {
                self.run_dir(run)
            } else {
                self.run_dir(run).join(sub)
            }
        };
        if !base.exists() {
            return Ok(Vec::new());
        }
        let mut keys = Vec::new();
        for entry in walkdir::WalkDir::new(&base).min_depth(1) {
            let entry = entry.map_err(|e| StoreError::Io {
                path: base.clone(),
                source: e.into(),
            })?;
            if !entry.file_type().is_file() {
                continue;
            }
            let name = entry.file_name().to_string_lossy();
            if name.starts_with(".tmp-") {
                continue;
            }
            let rel = entry
                .path()
                .strip_prefix(&base)
                .expect("walk stays under base")
                .to_string_lossy()
                .replace('\\', "/");
            keys.push(rel);
        }
        keys.sort();
        Ok(keys)
    }

    fn list_runs(
        &self,
        corpus: Option<&str>,
        method: Option<&str>,
    ) -> Result<Vec<RunId>, StoreError> {
        let mut runs = Vec::new();
        if !self.root.exists() {
            return Ok(runs);
        }
        let entries = fs::read_dir(&self.root).map_err(io_err(&self.root))?;
        for entry in entries {
            let entry = entry.map_err(io_err(&self.root))?;
            let meta_path = entry.path().join(RUN_META);
            if !meta_path.is_file() {
                continue;
            }
            let bytes = fs::read(&meta_path).map_err(io_err(&meta_path))?;
            let run: RunId = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
                path: meta_path,
                msg: e.to_string(),
            })?;
            if corpus.is_some_and(|c| c != run.corpus) {
                continue;
            }
            if method.is_some_and(|m| m != run.method) {
                continue;
            }
            runs.push(run);
        }
        runs.sort_by(|a, b| {
            a.created_at
                .cmp(&b.created_at)
                .then_with(|| a.simulation_id.cmp(&b.simulation_id))
        });
        Ok(runs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> (tempfile::TempDir, LocalStore) {
        let dir = tempfile::tempdir().unwrap();
        let store = LocalStore::open(dir.path()).unwrap();
        (dir, store)
    }

    #[test]
    fn put_then_get_round_trips_bytes() {
        let (_dir, store) = store();
        let run = RunId::new("coq", "bpe");
        store.create_run(&run).unwrap();
        let payload = b"\x00\x01binary\xffdata";
        store
            .put(&run, ArtifactKind::Stream, "train.bin", payload, false)
            .unwrap();
        let got = store.get(&run, ArtifactKind::Stream, "train.bin").unwrap();
        assert_eq!(got, payload);
    }

    #[test]
    fn duplicate_key_without_overwrite_conflicts() {
        let (_dir, store) = store();
        let run = RunId::new("coq", "bpe");
        store.create_run(&run).unwrap();
        store
            .put(&run, ArtifactKind::Report, "t.csv", b"a", false)
            .unwrap();
        assert!(matches!(
            store.put(&run, ArtifactKind::Report, "t.csv", b"b", false),
            Err(StoreError::Conflict { .. })
        ));
        store
            .put(&run, ArtifactKind::Report, "t.csv", b"b", true)
            .unwrap();
        assert_eq!(store.get(&run, ArtifactKind::Report, "t.csv").unwrap(), b"b");
    }

    #[test]
    fn interrupted_write_leaves_no_visible_artifact() {
        let (_dir, store) = store();
        let run = RunId::new("coq", "bpe");
        store.create_run(&run).unwrap();
        // simulate a writer killed between temp-write and rename
        let dir = store.run_dir(&run).join("reports");
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join(".tmp-deadbeef-t.csv"), b"partial").unwrap();
        assert!(!store.exists(&run, ArtifactKind::Report, "t.csv"));
        assert!(matches!(
            store.get(&run, ArtifactKind::Report, "t.csv"),
            Err(StoreError::Missing { .. })
        ));
        assert!(store.list(&run, ArtifactKind::Report).unwrap().is_empty());
    }

    #[test]
    fn empty_store_lists_nothing() {
        let (_dir, store) = store();
        assert!(store.list_runs(None, None).unwrap().is_empty());
    }

    #[test]
    fn list_runs_filters_and_preserves_creation_order() {
        let (_dir, store) = store();
        let a = RunId::new("coq", "bpe");
        std::thread::sleep(std::time::Duration::from_millis(2));
        let b = RunId::new("lean", "bpe");
        std::thread::sleep(std::time::Duration::from_millis(2));
        let c = RunId::new("coq", "word");
        for run in [&a, &b, &c] {
            store.create_run(run).unwrap();
        }
        let all = store.list_runs(None, None).unwrap();
        assert_eq!(
            all.iter().map(|r| r.simulation_id.as_str()).collect::<Vec<_>>(),
            vec![&a.simulation_id, &b.simulation_id, &c.simulation_id]
        );
        let coq = store.list_runs(Some("coq"), None).unwrap();
        assert_eq!(coq.len(), 2);
        let coq_bpe = store.list_runs(Some("coq"), Some("bpe")).unwrap();
        assert_eq!(coq_bpe.len(), 1);
        assert_eq!(coq_bpe[0].simulation_id, a.simulation_id);
        // relisting without writes is stable
        assert_eq!(store.list_runs(None, None).unwrap(), all);
    }

    #[test]
    fn nested_generation_keys() {
        let (_dir, store) = store();
        let run = RunId::new("toy", "character");
        store.create_run(&run).unwrap();
        store
            .put(&run, ArtifactKind::Generation, "g1/individual_0.json", b"{}", false)
            .unwrap();
        store
            .put(&run, ArtifactKind::Generation, "g1/individual_1.json", b"{}", false)
            .unwrap();
        store
            .put(&run, ArtifactKind::Generation, "g2/individual_0.json", b"{}", false)
            .unwrap();
        let keys = store.list(&run, ArtifactKind::Generation).unwrap();
        assert_eq!(
            keys,
            vec![
                "g1/individual_0.json",
                "g1/individual_1.json",
                "g2/individual_0.json"
            ]
        );
    }

    #[test]
    fn corpus_files_round_trip() {
        let (_dir, store) = store();
        store
            .put_corpus_file("toy", "train.txt", b"hello", false)
            .unwrap();
        assert_eq!(store.get_corpus_file("toy", "train.txt").unwrap(), b"hello");
        assert!(store.put_corpus_file("toy", "train.txt", b"again", false).is_err());
        // corpora directory is not mistaken for a run
        assert!(store.list_runs(None, None).unwrap().is_empty());
    }

    #[test]
    fn find_run_reads_back_identity() {
        let (_dir, store) = store();
        let run = RunId::new("toy", "word");
        store.create_run(&run).unwrap();
        let found = store.find_run(&run.simulation_id).unwrap();
        assert_eq!(found, run);
        assert!(store.find_run("nope").is_err());
    }
}
