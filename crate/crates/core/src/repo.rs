//! Shared plumbing for the `.protoml` directory: the single-writer lock and
//! atomic file replacement.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

pub const DEFAULT_REPO_DIR: &str = ".protoml";
pub const LOCK_FILE: &str = "lock";

#[derive(Debug, thiserror::Error)]
pub enum LockError {
    #[error("repository is locked by another writer ({0}); remove the file if no writer is running")]
    Locked(PathBuf),
    #[error("cannot create lock {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Held for the duration of one mutation; released on drop.
#[derive(Debug)]
pub struct LockGuard {
    path: PathBuf,
}

impl LockGuard {
    pub fn acquire(repo_dir: &Path) -> Result<LockGuard, LockError> {
        let path = repo_dir.join(LOCK_FILE);
        fs::create_dir_all(repo_dir).map_err(|source| LockError::Io { path: path.clone(), source })?;
        for attempt in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut file) => {
                    let _ = write!(file, "{}", std::process::id());
                    return Ok(LockGuard { path });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    if attempt == 0 && is_stale(&path) {
                        let _ = fs::remove_file(&path);
                        continue;
                    }
                    return Err(LockError::Locked(path));
                }
                Err(source) => return Err(LockError::Io { path, source }),
            }
        }
        Err(LockError::Locked(path))
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// A lock whose recorded process no longer exists. Only decidable where
/// `/proc` is available; elsewhere locks are never considered stale.
fn is_stale(path: &Path) -> bool {
    let Ok(text) = fs::read_to_string(path) else { return false };
    let Ok(pid) = text.trim().parse::<u32>() else { return false };
    let proc_root = Path::new("/proc");
    proc_root.join("self").exists() && !proc_root.join(pid.to_string()).exists()
}

/// Writes to a sibling temporary file, then renames over the target.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = path.with_file_name(format!(".{file_name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
