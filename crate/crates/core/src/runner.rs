//! Durable, resumable execution of a prompt set against a backend.
//!
//! A run directory holds:
//!
//! * `manifest`: one [`RunManifest`] JSON line,
//! * `prompts.jsonl`: the kept prompt set the run is bound to,
//! * `completions.jsonl`: one [`CompletionRecord`] per completed prompt,
//! * `failures.jsonl`: one [`FailureRecord`] per failed attempt.
//!
//! Logs are append-only. Every record is written as one complete line and
//! synced before the prompt counts as done, so [`status`] can rebuild the
//! run state from the files alone.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use chrono::{DateTime, Utc};
use crossbeam::channel;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{Backend, BackendError, CompletionRecord};
use crate::jsonl;
use crate::promptlab::RenderedPrompt;

pub const MANIFEST_FILE: &str = "manifest";
pub const PROMPTS_FILE: &str = "prompts.jsonl";
pub const COMPLETIONS_FILE: &str = "completions.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";
pub const DEFAULT_PARALLELISM: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("store corrupt: {file} at byte {offset}: {reason}")]
    StoreCorrupt { file: String, offset: u64, reason: String },
    #[error("store {0} already holds a run; pass resume to continue it")]
    StoreExists(String),
    #[error("no run found in {0}")]
    NoRun(String),
    #[error("prompt set does not match the run manifest ({0})")]
    ManifestMismatch(String),
    #[error("store is locked by {0}")]
    Locked(String),
    #[error("parallelism must be at least 1")]
    InvalidParallelism,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub model: String,
    pub prompt_set_hash: String,
    pub counter_kind: String,
    pub created: DateTime<Utc>,
    pub parallelism: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub prompt_id: String,
    pub error: String,
    pub timestamp: DateTime<Utc>,
}

/// Partition of the run's prompt set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunState {
    pub completed: BTreeSet<String>,
    pub failed: BTreeMap<String, String>,
    pub pending: BTreeSet<String>,
}

impl RunState {
    pub fn total(&self) -> usize {
        self.completed.len() + self.failed.len() + self.pending.len()
    }
}

/// Order-insensitive content hash of a prompt set.
pub fn prompt_set_hash(prompts: &[RenderedPrompt]) -> String {
    let mut entries: Vec<(&str, &str)> = prompts
        .iter()
        .map(|p| (p.prompt_id.as_str(), p.text.as_str()))
        .collect();
    entries.sort_unstable();
    let mut h = Sha256::new();
    for (id, text) in entries {
        h.update(id.as_bytes());
        h.update([0]);
        h.update(text.as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}

/// Handle on one run directory.
#[derive(Debug, Clone)]
pub struct RunStore {
    dir: PathBuf,
}

impl RunStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        RunStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    pub fn exists(&self) -> bool {
        self.path(MANIFEST_FILE).is_file()
    }

    pub fn manifest(&self) -> Result<RunManifest, RunError> {
        let path = self.path(MANIFEST_FILE);
        if !path.is_file() {
            return Err(RunError::NoRun(self.dir.display().to_string()));
        }
        let mut records: Vec<RunManifest> = read_log(&path)?;
        match records.len() {
            1 => Ok(records.remove(0)),
            n => Err(RunError::StoreCorrupt {
                file: path.display().to_string(),
                offset: 0,
                reason: format!("expected one manifest record, found {n}"),
            }),
        }
    }

    pub fn prompts(&self) -> Result<Vec<RenderedPrompt>, RunError> {
        read_log(&self.path(PROMPTS_FILE))
    }

    pub fn completions(&self) -> Result<Vec<CompletionRecord>, RunError> {
        read_log(&self.path(COMPLETIONS_FILE))
    }

    pub fn failures(&self) -> Result<Vec<FailureRecord>, RunError> {
        read_log(&self.path(FAILURES_FILE))
    }

    fn initialize(&self, manifest: &RunManifest, prompts: &[RenderedPrompt]) -> Result<(), RunError> {
        fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        let prompts_path = self.path(PROMPTS_FILE);
        write_synced(&prompts_path, |w| {
            prompts.iter().try_for_each(|p| jsonl::write_line(w, p))
        })?;
        for file in [COMPLETIONS_FILE, FAILURES_FILE] {
            let p = self.path(file);
            File::create(&p).map_err(io_err(&p))?;
        }
        // the manifest goes last and appears atomically: its presence marks
        // an initialized run
        let tmp = self.path(".manifest.tmp");
        write_synced(&tmp, |w| jsonl::write_line(w, manifest))?;
        let manifest_path = self.path(MANIFEST_FILE);
        fs::rename(&tmp, &manifest_path).map_err(io_err(&manifest_path))
    }
}

fn write_synced(path: &Path, body: impl FnOnce(&mut io::BufWriter<&File>) -> io::Result<()>) -> Result<(), RunError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = io::BufWriter::new(&file);
    body(&mut w).and_then(|_| w.flush()).map_err(io_err(path))?;
    drop(w);
    file.sync_all().map_err(io_err(path))
}

/// Reads a log strictly. A missing file is an empty log; a final line
/// without its newline, or any unparsable line, is corruption.
fn read_log<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RunError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let corrupt = |offset: usize, reason: String| RunError::StoreCorrupt {
        file: path.display().to_string(),
        offset: offset as u64,
        reason,
    };
    let mut out = Vec::new();
    let mut offset = 0;
    while offset < bytes.len() {
        let Some(len) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            return Err(corrupt(offset, "truncated final record".into()));
        };
        let line = &bytes[offset..offset + len];
        if !line.iter().all(u8::is_ascii_whitespace) {
            let value = serde_json::from_slice(line).map_err(|e| corrupt(offset, e.to_string()))?;
            out.push(value);
        }
        offset += len + 1;
    }
    Ok(out)
}

/// Drops a half-written trailing record from the run's logs. Returns the
/// number of bytes removed.
pub fn repair(store: &Path) -> Result<u64, RunError> {
    let mut removed = 0;
    for file in [COMPLETIONS_FILE, FAILURES_FILE] {
        let path = store.join(file);
        let Ok(bytes) = fs::read(&path) else { continue };
        let keep = bytes.iter().rposition(|&b| b == b'\n').map(|i| i + 1).unwrap_or(0);
        if keep < bytes.len() {
            let f = OpenOptions::new().write(true).open(&path).map_err(io_err(&path))?;
            f.set_len(keep as u64).map_err(io_err(&path))?;
            f.sync_all().map_err(io_err(&path))?;
            removed += (bytes.len() - keep) as u64;
        }
    }
    Ok(removed)
}

/// Rebuilds the run state from the store's files.
pub fn status(store: &Path) -> Result<RunState, RunError> {
    let store = RunStore::new(store);
    store.manifest()?;
    let prompts = store.prompts()?;
    state_from_logs(&store, &prompts)
}

fn state_from_logs(store: &RunStore, prompts: &[RenderedPrompt]) -> Result<RunState, RunError> {
    let known: HashSet<&str> = prompts.iter().map(|p| p.prompt_id.as_str()).collect();
    let mut state = RunState::default();
    for rec in store.completions()? {
        let file = store.path(COMPLETIONS_FILE).display().to_string();
        if !known.contains(rec.prompt_id.as_str()) {
            return Err(RunError::StoreCorrupt {
                file,
                offset: 0,
                reason: format!("completion for unknown prompt {}", rec.prompt_id),
            });
        }
        if !state.completed.insert(rec.prompt_id.clone()) {
            return Err(RunError::StoreCorrupt {
                file,
                offset: 0,
                reason: format!("prompt {} completed twice", rec.prompt_id),
            });
        }
    }
    for rec in store.failures()? {
        if !state.completed.contains(&rec.prompt_id) && known.contains(rec.prompt_id.as_str()) {
            state.failed.insert(rec.prompt_id, rec.error);
        }
    }
    for p in prompts {
        if !state.completed.contains(&p.prompt_id) && !state.failed.contains_key(&p.prompt_id) {
            state.pending.insert(p.prompt_id.clone());
        }
    }
    Ok(state)
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub parallelism: usize,
    pub resume: bool,
    /// Re-attempt prompts recorded as failed.
    pub retry_failed: bool,
    pub run_id: Option<String>,
    pub counter_kind: String,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            parallelism: DEFAULT_PARALLELISM,
            resume: false,
            retry_failed: false,
            run_id: None,
            counter_kind: "approximate".into(),
        }
    }
}

struct Appender {
    path: PathBuf,
    file: File,
}

impl Appender {
    fn open(path: PathBuf) -> Result<Self, RunError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        Ok(Appender { path, file })
    }

    fn append<T: Serialize>(&mut self, value: &T) -> Result<(), RunError> {
        let line = jsonl::to_line(value).map_err(io_err(&self.path))?;
        self.file.write_all(&line).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))
    }
}

pub fn run(
    prompts: &[RenderedPrompt],
    backend: &dyn Backend,
    store: &Path,
    options: &RunOptions,
) -> Result<RunState, RunError> {
    run_until(prompts, backend, store, options, &AtomicBool::new(false))
}

/// Like [`run`], but stops handing out work once `stop` is set. Prompts
/// already in flight still get recorded.
pub fn run_until(
    prompts: &[RenderedPrompt],
    backend: &dyn Backend,
    store_dir: &Path,
    options: &RunOptions,
    stop: &AtomicBool,
) -> Result<RunState, RunError> {
    if options.parallelism == 0 {
        return Err(RunError::InvalidParallelism);
    }
    let store = RunStore::new(store_dir);
    let hash = prompt_set_hash(prompts);
    if store.exists() {
        if !options.resume {
            return Err(RunError::StoreExists(store_dir.display().to_string()));
        }
        let manifest = store.manifest()?;
        if manifest.prompt_set_hash != hash {
            return Err(RunError::ManifestMismatch(format!(
                "store hash {}, given {}",
                &manifest.prompt_set_hash[..12],
                &hash[..12]
            )));
        }
        if manifest.model != backend.model() {
            return Err(RunError::ManifestMismatch(format!(
                "store model {}, backend {}",
                manifest.model,
                backend.model()
            )));
        }
    } else {
        let manifest = RunManifest {
            run_id: options
                .run_id
                .clone()
                .unwrap_or_else(|| format!("{}-{}", backend.model(), &hash[..8])),
            model: backend.model().to_string(),
            prompt_set_hash: hash,
            counter_kind: options.counter_kind.clone(),
            created: Utc::now(),
            parallelism: options.parallelism,
        };
        store.initialize(&manifest, prompts)?;
    }

    let state = state_from_logs(&store, prompts)?;
    let todo: Vec<&RenderedPrompt> = prompts
        .iter()
        .filter(|p| {
            state.pending.contains(&p.prompt_id) || (options.retry_failed && state.failed.contains_key(&p.prompt_id))
        })
        .collect();

    let mut completions = Appender::open(store.path(COMPLETIONS_FILE))?;
    let mut failures = Appender::open(store.path(FAILURES_FILE))?;

    let (job_tx, job_rx) = channel::unbounded::<&RenderedPrompt>();
    for p in &todo {
        job_tx.send(p).expect("receiver alive");
    }
    drop(job_tx);

    let write_result: Result<(), RunError> = std::thread::scope(|scope| {
        let (result_tx, result_rx) =
            channel::bounded::<(String, Result<CompletionRecord, BackendError>)>(options.parallelism);
        for _ in 0..options.parallelism.min(todo.len().max(1)) {
            let job_rx = job_rx.clone();
            let result_tx = result_tx.clone();
            scope.spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    let Ok(prompt) = job_rx.recv() else { break };
                    let result = backend.complete(prompt);
                    if result_tx.send((prompt.prompt_id.clone(), result)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(result_tx);

        // single writer: appends are serialized on this thread
        for (prompt_id, result) in result_rx.iter() {
            let written = match result {
                Ok(mut record) => {
                    record.prompt_id = prompt_id;
                    completions.append(&record)
                }
                Err(e) => failures.append(&FailureRecord {
                    prompt_id,
                    error: e.to_string(),
                    timestamp: Utc::now(),
                }),
            };
            if let Err(e) = written {
                stop.store(true, Ordering::SeqCst);
                return Err(e);
            }
        }
        Ok(())
    });
    write_result?;
    state_from_logs(&store, prompts)
}

/// Exclusive lock on a directory, released on drop.
#[derive(Debug)]
pub struct StoreLock {
    path: PathBuf,
}

impl StoreLock {
    pub fn acquire(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(".lock");
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let _ = writeln!(f, "{}", std::process::id());
                    return Ok(StoreLock { path });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(&path).unwrap_or_default();
                    match holder.trim().parse::<u32>() {
                        Ok(pid) if holder_is_gone(pid) => {
                            let _ = fs::remove_file(&path);
                        }
                        _ => return Err(RunError::Locked(format!("pid {} ({})", holder.trim(), path.display()))),
                    }
                }
                Err(e) => return Err(io_err(&path)(e)),
            }
        }
        Err(RunError::Locked(path.display().to_string()))
    }
}

/// Whether the process that wrote a lock file has exited. Only detectable
/// where `/proc` exists; elsewhere a lock is always treated as held.
fn holder_is_gone(pid: u32) -> bool {
    let proc_root = Path::new("/proc/self");
    proc_root.exists() && pid != std::process::id() && !Path::new(&format!("/proc/{pid}")).exists()
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promptlab::{ExperimentCell, TemplateKind};
    use std::sync::atomic::AtomicUsize;
    use std::sync::Mutex;

    fn prompts(n: usize) -> Vec<RenderedPrompt> {
        (0..n)
            .map(|i| RenderedPrompt {
                prompt_id: format!("p{i:03}"),
                cell: ExperimentCell::zero_shot(TemplateKind::Basic),
                test_post_id: format!("t{i}"),
                shot_ids: vec![],
                shot_order_seed: 0,
                text: format!("prompt {i}"),
            })
            .collect()
    }

    struct Echo {
        calls: Mutex<Vec<String>>,
        fail_on: Option<String>,
    }

    impl Echo {
        fn new(fail_on: Option<&str>) -> Self {
            Echo {
                calls: Mutex::new(Vec::new()),
                fail_on: fail_on.map(String::from),
            }
        }
    }

    impl Backend for Echo {
        fn model(&self) -> &str {
            "echo"
        }
        fn complete(&self, p: &RenderedPrompt) -> Result<CompletionRecord, BackendError> {
            self.calls.lock().unwrap().push(p.prompt_id.clone());
            if self.fail_on.as_deref() == Some(&p.prompt_id) {
                return Err(BackendError::BackendExhausted {
                    last_status: Some(503),
                    message: "down".into(),
                });
            }
            Ok(CompletionRecord {
                prompt_id: p.prompt_id.clone(),
                model: "echo".into(),
                raw_text: "against".into(),
                finish_reason: "stop".into(),
                latency_ms: 0,
                usage: None,
                attempt: 1,
                timestamp: DateTime::<Utc>::UNIX_EPOCH,
            })
        }
    }

    #[test]
    fn full_run_and_status() {
        let dir = tempfile::tempdir().unwrap();
        let store = dir.path().join("run");
        let ps = prompts(42);
        let backend = Echo::new(None);
        let state = run(&ps, &backend, &store, &RunOptions::default()).unwrap();
        assert_eq!(state.completed.len(), 42);
        assert!(state.pending.is_empty() && state.failed.is_empty());
        assert_eq!(status(&store).unwrap(), state);
        assert_eq!(backend.calls.lock().unwrap().len(), 42);
        assert_eq!(RunStore::new(&store).manifest().unwrap().model, "echo");
    }

    #[test]
    fn permanent_failure_is_partitioned() {
        let dir = tempfile::tempdir().unwrap();
        let store = dir.path().join("run");
        let ps = prompts(42);
        let state = run(&ps, &Echo::new(Some("p007")), &store, &RunOptions::default()).unwrap();
        assert_eq!(state.completed.len(), 41);
        assert_eq!(state.failed.len(), 1);
        assert!(state.failed["p007"].contains("503"));

        // a plain resume leaves it failed, an explicit retry picks it up
        let resume = RunOptions {
            resume: true,
            ..RunOptions::default()
        };
        let again = Echo::new(None);
        let state = run(&ps, &again, &store, &resume).unwrap();
        assert_eq!(state.failed.len(), 1);
        assert!(again.calls.lock().unwrap().is_empty());
        let retry = RunOptions {
            resume: true,
            retry_failed: true,
            ..RunOptions::default()
        };
        let state = run(&ps, &again, &store, &retry).unwrap();
        assert_eq!(state.completed.len(), 42);
        assert_eq!(*again.calls.lock().unwrap(), vec!["p007".to_string()]);
    }

    #[test]
    fn existing_store_requires_resume_and_same_prompts() {
        let dir = tempfile::tempdir().unwrap();
        let store = dir.path().join("run");
        let ps = prompts(5);
        run(&ps, &Echo::new(None), &store, &RunOptions::default()).unwrap();
        assert!(matches!(
            run(&ps, &Echo::new(None), &store, &RunOptions::default()),
            Err(RunError::StoreExists(_))
        ));
        let resume = RunOptions {
            resume: true,
            ..RunOptions::default()
        };
        assert!(matches!(
            run(&prompts(6), &Echo::new(None), &store, &resume),
            Err(RunError::ManifestMismatch(_))
        ));
    }

    #[test]
    fn interrupted_run_resumes_without_repeats() {
        struct Stopper<'a> {
            inner: Echo,
            seen: AtomicUsize,
            stop: &'a AtomicBool,
        }
        impl Backend for Stopper<'_> {
            fn model(&self) -> &str {
                "echo"
            }
            fn complete(&self, p: &RenderedPrompt) -> Result<CompletionRecord, BackendError> {
                if self.seen.fetch_add(1, Ordering::SeqCst) + 1 >= 20 {
                    self.stop.store(true, Ordering::SeqCst);
                }
                self.inner.complete(p)
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let store = dir.path().join("run");
        let ps = prompts(42);
        let stop = AtomicBool::new(false);
        let first = Stopper {
            inner: Echo::new(None),
            seen: AtomicUsize::new(0),
            stop: &stop,
        };
        let opts = RunOptions {
            parallelism: 3,
            ..RunOptions::default()
        };
        let partial = run_until(&ps, &first, &store, &opts, &stop).unwrap();
        assert!(partial.completed.len() >= 20 && partial.completed.len() < 42);
        assert!(!partial.pending.is_empty());

        let second = Echo::new(None);
        let resume = RunOptions { resume: true, ..opts };
        let done = run(&ps, &second, &store, &resume).unwrap();
        assert_eq!(done.completed.len(), 42);
        let first_calls = first.inner.calls.lock().unwrap().clone();
        let second_calls = second.calls.lock().unwrap().clone();
        assert_eq!(first_calls.len() + second_calls.len(), 42);
        let all: HashSet<_> = first_calls.iter().chain(&second_calls).collect();
        assert_eq!(all.len(), 42);
    }

    #[test]
    fn status_of_fresh_and_truncated_stores() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path().join("run"));
        let ps = prompts(12);
        let manifest = RunManifest {
            run_id: "r".into(),
            model: "echo".into(),
            prompt_set_hash: prompt_set_hash(&ps),
            counter_kind: "approximate".into(),
            created: Utc::now(),
            parallelism: 1,
        };
        store.initialize(&manifest, &ps).unwrap();
        let fresh = status(store.dir()).unwrap();
        assert_eq!(fresh.pending.len(), 12);

        let backend = Echo::new(None);
        let mut log = Vec::new();
        for p in &ps[..10] {
            log.extend(jsonl::to_line(&backend.complete(p).unwrap()).unwrap());
        }
        fs::write(store.path(COMPLETIONS_FILE), &log).unwrap();
        assert_eq!(status(store.dir()).unwrap().completed.len(), 10);

        let full_len = log.len();
        let half = jsonl::to_line(&backend.complete(&ps[10]).unwrap()).unwrap();
        log.extend(&half[..half.len() / 2]);
        fs::write(store.path(COMPLETIONS_FILE), &log).unwrap();
        match status(store.dir()) {
            Err(RunError::StoreCorrupt { offset, reason, .. }) => {
                assert_eq!(offset, full_len as u64);
                assert!(reason.contains("truncated"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(repair(store.dir()).unwrap(), (half.len() / 2) as u64);
        assert_eq!(status(store.dir()).unwrap().completed.len(), 10);
    }

    #[test]
    fn duplicate_completion_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let store = dir.path().join("run");
        let ps = prompts(2);
        run(&ps, &Echo::new(None), &store, &RunOptions::default()).unwrap();
        let path = store.join(COMPLETIONS_FILE);
        let content = fs::read_to_string(&path).unwrap();
        let first = content.lines().next().unwrap().to_string();
        fs::write(&path, format!("{content}{first}\n")).unwrap();
        assert!(matches!(status(&store), Err(RunError::StoreCorrupt { .. })));
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let lock = StoreLock::acquire(dir.path()).unwrap();
        assert!(matches!(StoreLock::acquire(dir.path()), Err(RunError::Locked(_))));
        drop(lock);
        assert!(StoreLock::acquire(dir.path()).is_ok());
    }

    #[test]
    #[cfg(target_os = "linux")]
    fn stale_lock_is_taken_over() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(".lock"), "4000000000\n").unwrap();
        let _lock = StoreLock::acquire(dir.path()).unwrap();
        let holder = std::fs::read_to_string(dir.path().join(".lock")).unwrap();
        assert_eq!(holder.trim(), std::process::id().to_string());
    }
}
