use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CrashGroup, Frame, TriageError, TriageVerdict, Verdict};
use super::verdict::Evidence;

pub const SECTIONS: [&str; 7] = [
    "Title",
    "Class",
    "Stack",
    "Reproduction",
    "Root Cause",
    "Evidence",
    "Minimized Harness",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReport {
    pub title: String,
    pub crash_class: String,
    pub harness: String,
    /// True when no minimized harness was available and the original is shown.
    pub harness_not_minimized: bool,
    pub reproducing_input: String,
    pub frames: Vec<Frame>,
    pub root_cause: String,
    pub evidence: Vec<Evidence>,
    /// Workspace-relative path of the written report.
    pub path: String,
}

impl BugReport {
    pub fn render(&self, harness_source: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "## Title\n{}\n", self.title);
        let _ = writeln!(s, "## Class\n{}\n", self.crash_class);
        s.push_str("## Stack\n");
        for (i, f) in self.frames.iter().enumerate() {
            let line = f.line.map(|l| format!(":{l}")).unwrap_or_default();
            let mark = if f.in_project { "" } else { " (external)" };
            let _ = writeln!(s, "#{i} {} {}{line}{mark}", f.function, f.file);
        }
        let _ = writeln!(
            s,
            "\n## Reproduction\nharness: {}\ninput: {}\nrun: ./{} {}\n",
            self.harness,
            self.reproducing_input,
            self.harness.trim_end_matches(".c"),
            self.reproducing_input
        );
        let _ = writeln!(s, "## Root Cause\n{}\n", self.root_cause.trim());
        s.push_str("## Evidence\n");
        for e in &self.evidence {
            let _ = writeln!(s, "- [{:?}] {}: {}", e.kind, e.reference, e.detail);
        }
        s.push_str("\n## Minimized Harness\n");
        if self.harness_not_minimized {
            s.push_str("NOTE: minimization unavailable; original harness shown.\n");
        }
        let _ = writeln!(s, "```c\n{}\n```", harness_source.trim_end());
        s
    }
}

fn crash_title(group: &CrashGroup) -> String {
    let rep = group.representative();
    let top = rep
        .frames
        .iter()
        .find(|f| f.in_project)
        .or(rep.frames.first());
    match top {
        Some(f) => format!("{} in {} ({})", rep.signal_kind.label(), f.function, f.file),
        None => format!("{} in unknown location", rep.signal_kind.label()),
    }
}

/// Writes `reports/bugs/<key>.md` for a confirmed library bug. Falls back to
/// the original harness, flagged, when `minimized` is missing.
pub fn emit_bug_report(
    root: &Path,
    verdict: &TriageVerdict,
    group: &CrashGroup,
    minimized: Option<&str>,
) -> Result<BugReport, TriageError> {
    if verdict.verdict != Verdict::LibraryBug {
        return Err(TriageError::Precondition(format!(
            "bug reports need a LibraryBug verdict, got {:?}",
            verdict.verdict
        )));
    }
    let rep = group.representative();
    if !root.join(&rep.input_file).is_file() {
        return Err(TriageError::Precondition(format!(
            "reproducing input {} does not exist",
            rep.input_file
        )));
    }
    let original = format!("harnesses/{}.c", rep.harness_id);
    let (harness, flagged) = match minimized {
        Some(m) if root.join(m).is_file() => (m.to_string(), false),
        _ => (original, true),
    };
    let source = fs::read_to_string(root.join(&harness)).map_err(|e| TriageError::Io {
        context: format!("reading {harness}"),
        source: e,
    })?;
    let path = format!("reports/bugs/{}.md", group.short_key());
    let report = BugReport {
        title: crash_title(group),
        crash_class: rep.signal_kind.label().to_string(),
        harness,
        harness_not_minimized: flagged,
        reproducing_input: rep.input_file.clone(),
        frames: rep.frames.clone(),
        root_cause: verdict.rationale.clone(),
        evidence: verdict.evidence.clone(),
        path: path.clone(),
    };
    let dest = root.join(&path);
    fs::create_dir_all(dest.parent().expect("has parent")).map_err(|e| TriageError::Io {
        context: "creating reports/bugs".into(),
        source: e,
    })?;
    fs::write(&dest, report.render(&source)).map_err(|e| TriageError::Io {
        context: format!("writing {path}"),
        source: e,
    })?;
    Ok(report)
}
