//! Crash triage: report parsing, stack dedup, harness minimization, debugger
//! probes, evidence-gated classification and bug reports.

mod bugreport;
mod debugger;
mod dedup;
mod minimize;
mod report;
mod verdict;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzz::CrashFile;

pub use bugreport::{emit_bug_report, BugReport, SECTIONS};
pub use debugger::{debug_probe, Debugger, GdbDebugger, NoDebugger, Observation, ProbeCommand, ProbeOutcome, StubDebugger};
pub use dedup::{dedup_crashes, group_key, key_frames, CrashGroup, KEY_FRAMES};
pub use minimize::{minimize_harness, HarnessUnits, MinimizeError, Minimized};
pub use report::{parse_crash_report, Frame, ParsedReport, SignalKind, PROJECT_DIRS};
pub use verdict::{classify_crash, Action, AgentJudgment, Evidence, EvidenceKind, TriageVerdict, Verdict};

#[derive(Debug, Error)]
pub enum TriageError {
    #[error("{0}")]
    Precondition(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashArtifact {
    pub input_file: String,
    pub harness_id: String,
    pub raw_report: String,
    pub frames: Vec<Frame>,
    pub signal_kind: SignalKind,
}

impl CrashArtifact {
    /// Parses a fuzzer crash. `root` is the workspace root as it appears in
    /// the report's paths.
    pub fn from_crash(crash: &CrashFile, harness_id: &str, root: &str) -> Self {
        let parsed = parse_crash_report(&crash.raw_report, root);
        Self {
            input_file: crash.input_file.clone(),
            harness_id: harness_id.to_string(),
            raw_report: crash.raw_report.clone(),
            frames: parsed.frames,
            signal_kind: parsed.signal_kind,
        }
    }
}
