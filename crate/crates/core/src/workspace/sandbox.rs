use std::fs;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Subdir, WorkspaceLayout};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub requested: String,
    pub reason: String,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("sandbox violation: `{requested}` {reason}")]
pub struct SandboxViolation {
    pub requested: String,
    pub reason: String,
}

/// Path gatekeeper for everything an agent tool touches.
///
/// Rejections are counted and logged; the log is what exit validation reports
/// as `violations` until the agent loop acknowledges it.
#[derive(Debug)]
pub struct Sandbox {
    layout: WorkspaceLayout,
    rejected: AtomicUsize,
    pending: Mutex<Vec<Violation>>,
}

impl Sandbox {
    pub fn new(layout: WorkspaceLayout) -> Self {
        Self {
            layout,
            rejected: AtomicUsize::new(0),
            pending: Mutex::new(Vec::new()),
        }
    }

    pub fn layout(&self) -> &WorkspaceLayout {
        &self.layout
    }

    pub fn root(&self) -> &Path {
        self.layout.root()
    }

    /// Resolves an agent-supplied path to an absolute path inside the layout.
    ///
    /// Relative paths are taken from the root. Symlinks are followed before the
    /// containment check; components that do not exist yet are normalized
    /// lexically. The result is the root itself or lies under one of the fixed
    /// subdirectories.
    pub fn resolve(&self, requested: &str) -> Result<PathBuf, SandboxViolation> {
        match self.try_resolve(requested) {
            Ok(p) => Ok(p),
            Err(reason) => Err(self.reject(requested, reason)),
        }
    }

    /// Like [`resolve`](Self::resolve) but additionally requires the result to sit under one of `allowed`.
    pub fn resolve_within(
        &self,
        requested: &str,
        allowed: &[Subdir],
    ) -> Result<PathBuf, SandboxViolation> {
        let path = self.resolve(requested)?;
        let inside = allowed
            .iter()
            .any(|s| path.starts_with(self.layout.dir(*s)) && path != self.layout.dir(*s));
        if inside {
            Ok(path)
        } else {
            let names: Vec<_> = allowed.iter().map(|s| format!("{}/", s.name())).collect();
            Err(self.reject(requested, format!("must be inside {}", names.join(" or "))))
        }
    }

    fn reject(&self, requested: &str, reason: String) -> SandboxViolation {
        self.rejected.fetch_add(1, Ordering::SeqCst);
        let v = Violation {
            requested: requested.to_string(),
            reason: reason.clone(),
        };
        self.pending.lock().unwrap().push(v);
        SandboxViolation {
            requested: requested.to_string(),
            reason,
        }
    }

    fn try_resolve(&self, requested: &str) -> Result<PathBuf, String> {
        if requested.is_empty() {
            return Err("is empty".into());
        }
        if requested.contains('\0') {
            return Err("contains a NUL byte".into());
        }
        let root = self.layout.root();
        let candidate = Path::new(requested);
        let joined = if candidate.is_absolute() {
            candidate.to_path_buf()
        } else {
            root.join(candidate)
        };
        let resolved = physical_normalize(&joined)?;
        if resolved == root {
            return Ok(resolved);
        }
        let rel = match resolved.strip_prefix(root) {
            Ok(rel) => rel,
            Err(_) => return Err("escapes the workspace root".into()),
        };
        let top = rel
            .components()
            .next()
            .and_then(|c| c.as_os_str().to_str())
            .unwrap_or("");
        if Subdir::from_name(top).is_none() {
            return Err(format!("is outside the workspace layout (`{top}`)"));
        }
        Ok(resolved)
    }

    /// Number of rejected resolutions since creation.
    pub fn rejected_count(&self) -> usize {
        self.rejected.load(Ordering::SeqCst)
    }

    /// Violations not yet acknowledged by the agent loop.
    pub fn pending_violations(&self) -> Vec<Violation> {
        self.pending.lock().unwrap().clone()
    }

    pub fn acknowledge_violations(&self) {
        self.pending.lock().unwrap().clear();
    }

    pub fn relative(&self, path: &Path) -> String {
        self.layout.relative(path)
    }
}

/// Walks `path` component by component, canonicalizing every prefix that exists.
fn physical_normalize(path: &Path) -> Result<PathBuf, String> {
    let mut cur = PathBuf::new();
    let mut exists = true;
    for comp in path.components() {
        match comp {
            Component::Prefix(p) => cur.push(p.as_os_str()),
            Component::RootDir => {
                cur.push("/");
                exists = true;
            }
            Component::CurDir => {}
            Component::ParentDir => {
                cur.pop();
                if !exists {
                    // popped back out of the not-yet-existing tail
                    exists = fs::symlink_metadata(&cur).is_ok();
                }
            }
            Component::Normal(name) => {
                let next = cur.join(name);
                if exists {
                    match fs::symlink_metadata(&next) {
                        Ok(meta) => {
                            if meta.file_type().is_symlink() {
                                cur = fs::canonicalize(&next)
                                    .map_err(|_| "is a dangling symlink".to_string())?;
                            } else {
                                cur = next;
                            }
                        }
                        Err(_) => {
                            exists = false;
                            cur = next;
                        }
                    }
                } else {
                    cur = next;
                }
            }
        }
    }
    Ok(cur)
}
