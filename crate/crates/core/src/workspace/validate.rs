use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Violation, Workspace};
use crate::util::glob_files;
use crate::Role;

/// One line of a role's exit checklist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    /// This exact workspace-relative file must exist.
    File(&'static str),
    /// At least one file must match this glob.
    AnyMatch(&'static str),
    /// Every `harnesses/<name>.c` needs a compiled `harnesses/<name>` next to it.
    HarnessBinaries,
}

/// Static per-role checklist of artifacts an agent must leave behind.
pub fn checklist(role: Role) -> &'static [Check] {
    match role {
        Role::Manager => &[],
        Role::LibraryBuilder => &[Check::File("src/build.sh"), Check::AnyMatch("build/**/*.a")],
        Role::DictionaryGenerator => &[Check::AnyMatch("dict/*.dict")],
        Role::SeedGenerator => &[Check::AnyMatch("corpus/*")],
        Role::HarnessGenerator => &[Check::AnyMatch("harnesses/*.c"), Check::HarnessBinaries],
        Role::FuzzerExecutor => &[Check::AnyMatch("campaigns/*/campaign.json")],
        Role::CoverageAnalyzer => &[Check::AnyMatch("reports/guidance/*.json")],
        Role::CrashAnalyzer => &[Check::AnyMatch("reports/verdicts/*.json")],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub agent_role: Role,
    pub passed: bool,
    pub missing_artifacts: Vec<String>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn new(agent_role: Role, missing_artifacts: Vec<String>, violations: Vec<Violation>) -> Self {
        Self {
            agent_role,
            passed: missing_artifacts.is_empty() && violations.is_empty(),
            missing_artifacts,
            violations,
        }
    }

    /// The corrective message injected when an agent tries to exit early.
    pub fn reminder(&self) -> String {
        let mut msg = format!(
            "Exit check failed for {}. You are not done yet.\n",
            self.agent_role
        );
        if !self.missing_artifacts.is_empty() {
            msg.push_str("Missing artifacts:\n");
            for m in &self.missing_artifacts {
                msg.push_str(&format!("  - {m}\n"));
            }
        }
        if !self.violations.is_empty() {
            msg.push_str("Rejected out-of-workspace accesses:\n");
            for v in &self.violations {
                msg.push_str(&format!("  - {} ({})\n", v.requested, v.reason));
            }
        }
        msg.push_str("Produce the missing results inside the workspace, then reply DONE.");
        msg
    }
}

fn missing_for(root: &Path, check: Check) -> Vec<String> {
    match check {
        Check::File(path) => {
            if root.join(path).is_file() {
                vec![]
            } else {
                vec![path.to_string()]
            }
        }
        Check::AnyMatch(pattern) => {
            if glob_files(root, pattern).is_empty() {
                vec![pattern.to_string()]
            } else {
                vec![]
            }
        }
        Check::HarnessBinaries => glob_files(root, "harnesses/*.c")
            .into_iter()
            .filter_map(|src| {
                let bin = src.strip_suffix(".c")?.to_string();
                (!root.join(&bin).is_file()).then_some(bin)
            })
            .collect(),
    }
}

/// Checks the role's artifacts plus any step-specific expectations and
/// appends the outcome to the progress ledger.
pub fn validate_phase_outputs(ws: &mut Workspace, role: Role, now: f64) -> ValidationReport {
    let root = ws.root().to_path_buf();
    let mut missing: Vec<String> = checklist(role)
        .iter()
        .flat_map(|c| missing_for(&root, *c))
        .collect();
    for expected in &ws.state.expectations {
        if !root.join(expected).exists() && !missing.contains(expected) {
            missing.push(expected.clone());
        }
    }
    let report = ValidationReport::new(role, missing, ws.sandbox.pending_violations());
    ws.state.record_step(role, now, report.passed);
    report
}
