use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::store::{Store, StoreError};
use super::tree::Snapshot;
use crate::notebook::{parse_notebook, Notebook};

pub const DEFAULT_POLL_INTERVAL: Duration = Duration::from_millis(500);

#[derive(Debug)]
pub enum WatchEvent {
    Recorded(Snapshot),
    /// Reported once per disappearance; watching continues.
    FileVanished(PathBuf),
    /// The file exists but could not be read or parsed; retried on change.
    Unreadable(String),
    StoreFailed(StoreError),
}

/// Polls one notebook file and records a snapshot whenever a code cell shows
/// new execution evidence relative to head.
#[derive(Debug)]
pub struct Watcher {
    store: Store,
    path: PathBuf,
    last_bytes: Option<Vec<u8>>,
    vanished: bool,
    /// Comparison point while the store is still empty.
    baseline: Option<Notebook>,
}

impl Watcher {
    pub fn new(store: Store, path: impl Into<PathBuf>) -> Watcher {
        Watcher { store, path: path.into(), last_bytes: None, vanished: false, baseline: None }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn into_store(self) -> Store {
        self.store
    }

    pub fn poll_once(&mut self) -> Option<WatchEvent> {
        let bytes = match fs::read(&self.path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                self.last_bytes = None;
                if self.vanished {
                    return None;
                }
                self.vanished = true;
                return Some(WatchEvent::FileVanished(self.path.clone()));
            }
            Err(e) => return Some(WatchEvent::Unreadable(e.to_string())),
        };
        self.vanished = false;
        if self.last_bytes.as_deref() == Some(bytes.as_slice()) {
            return None;
        }
        let nb = match parse_notebook(&bytes) {
            Ok(nb) => nb,
            Err(e) => {
                self.last_bytes = Some(bytes);
                return Some(WatchEvent::Unreadable(e.to_string()));
            }
        };
        if let Err(e) = self.store.refresh() {
            return Some(WatchEvent::StoreFailed(e));
        }
        let reference = match self.store.head() {
            Some(head) => match self.store.notebook(&head.node_id) {
                Ok(nb) => Some(nb),
                Err(e) => return Some(WatchEvent::StoreFailed(e)),
            },
            None => self.baseline.clone(),
        };
        let Some(reference) = reference else {
            self.baseline = Some(nb);
            self.last_bytes = Some(bytes);
            return None;
        };
        let event = match execution_trigger(&reference, &nb) {
            None => None,
            Some(trigger) => match self.store.record(&nb, Some(&trigger), None) {
                Ok(snap) => Some(WatchEvent::Recorded(snap)),
                // leave last_bytes untouched so the next poll retries
                Err(e) => return Some(WatchEvent::StoreFailed(e)),
            },
        };
        if self.store.is_empty() {
            self.baseline = Some(nb);
        }
        self.last_bytes = Some(bytes);
        event
    }

    /// Runs on a background thread until [`WatchHandle::stop`].
    pub fn spawn(mut self, interval: Duration) -> WatchHandle {
        let stop = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::channel();
        let flag = stop.clone();
        let thread = thread::spawn(move || {
            let tick = interval.min(Duration::from_millis(20)).max(Duration::from_millis(1));
            while !flag.load(Ordering::SeqCst) {
                if let Some(event) = self.poll_once() {
                    if tx.send(event).is_err() {
                        break;
                    }
                }
                let mut waited = Duration::ZERO;
                while waited < interval && !flag.load(Ordering::SeqCst) {
                    thread::sleep(tick);
                    waited += tick;
                }
            }
            self
        });
        WatchHandle { stop, events: rx, thread }
    }
}

pub struct WatchHandle {
    stop: Arc<AtomicBool>,
    pub events: Receiver<WatchEvent>,
    thread: JoinHandle<Watcher>,
}

impl WatchHandle {
    pub fn stop(self) -> Watcher {
        self.stop.store(true, Ordering::SeqCst);
        self.thread.join().expect("watch thread panicked")
    }
}

/// The code cell whose execution evidence changed, preferring the highest
/// execution count. `None` when nothing was executed.
pub fn execution_trigger(reference: &Notebook, current: &Notebook) -> Option<String> {
    let mut best: Option<(&str, Option<u64>)> = None;
    for (_, cell) in current.code_cells() {
        let changed = match reference.cell(&cell.cell_id) {
            Some(prev) => prev.execution_count != cell.execution_count || prev.outputs_digest != cell.outputs_digest,
            None => cell.execution_count.is_some() || cell.outputs_digest.is_some(),
        };
        if !changed {
            continue;
        }
        match best {
            Some((_, count)) if count >= cell.execution_count => {}
            _ => best = Some((&cell.cell_id, cell.execution_count)),
        }
    }
    best.map(|(id, _)| id.to_string())
}
