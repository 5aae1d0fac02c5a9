//! The sandboxed fuzzing workspace.
//!
//! A workspace is a directory with a fixed set of top-level subdirectories.
//! Agents only ever see paths relative to its root, every path they supply is
//! resolved through [`Sandbox::resolve`], and each agent's exit is checked
//! against a per-role artifact checklist before the scheduler moves on.

mod layout;
mod sandbox;
mod state;
mod validate;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

pub use layout::{init_workspace, Subdir, WorkspaceLayout, SUBDIRS};
pub use sandbox::{Sandbox, SandboxViolation, Violation};
pub use state::{ArtifactKind, CompletedStep, Phase, PhaseEvent, TransitionError, WorkspaceState};
pub use validate::{checklist, validate_phase_outputs, Check, ValidationReport};

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("workspace root not empty: {0}")]
    RootNotEmpty(PathBuf),
    #[error("target source not readable: {path}: {reason}")]
    SourceUnreadable { path: PathBuf, reason: String },
    #[error("not a workspace (missing {0})")]
    NotAWorkspace(PathBuf),
    #[error("state file {path}: {reason}")]
    State { path: PathBuf, reason: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl WorkspaceError {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        WorkspaceError::Io {
            context: context.into(),
            source,
        }
    }
}

/// A workspace on disk together with its progress ledger.
#[derive(Debug)]
pub struct Workspace {
    pub sandbox: Arc<Sandbox>,
    pub state: WorkspaceState,
}

impl Workspace {
    pub fn layout(&self) -> &WorkspaceLayout {
        self.sandbox.layout()
    }

    pub fn root(&self) -> &Path {
        self.sandbox.layout().root()
    }

    /// Opens an existing workspace, restoring `reports/state.json` when present.
    pub fn open(root: &Path) -> Result<Self, WorkspaceError> {
        let layout = WorkspaceLayout::open(root)?;
        let state_path = layout.state_file();
        let state = if state_path.exists() {
            let text = fs::read_to_string(&state_path)
                .map_err(|e| WorkspaceError::io(format!("reading {}", state_path.display()), e))?;
            serde_json::from_str(&text).map_err(|e| WorkspaceError::State {
                path: state_path.clone(),
                reason: e.to_string(),
            })?
        } else {
            WorkspaceState::new()
        };
        Ok(Self {
            sandbox: Arc::new(Sandbox::new(layout)),
            state,
        })
    }

    pub fn save_state(&self) -> Result<(), WorkspaceError> {
        let path = self.layout().state_file();
        let text = serde_json::to_string_pretty(&self.state).expect("state serializes");
        fs::write(&path, text + "\n")
            .map_err(|e| WorkspaceError::io(format!("writing {}", path.display()), e))
    }

    /// Applies a workflow event and persists the new state.
    pub fn advance(&mut self, event: PhaseEvent) -> Result<Phase, TransitionError> {
        let phase = self.state.advance(event)?;
        // a failed write leaves the in-memory state authoritative; the next save retries
        let _ = self.save_state();
        Ok(phase)
    }

    pub fn validate(&mut self, role: crate::Role, now: f64) -> ValidationReport {
        validate_phase_outputs(self, role, now)
    }
}
