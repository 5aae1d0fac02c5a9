use serde::{Deserialize, Serialize};

use super::CrashGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    LibraryBug,
    HarnessError,
    Inconclusive,
}

impl Verdict {
    pub fn action(self) -> Action {
        match self {
            Verdict::LibraryBug => Action::EmitReport,
            Verdict::HarnessError => Action::FixHarness,
            Verdict::Inconclusive => Action::Requeue,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace(['_', '-', ' '], "").as_str() {
            "librarybug" | "library" | "bug" => Some(Verdict::LibraryBug),
            "harnesserror" | "harnessbug" | "harness" => Some(Verdict::HarnessError),
            "inconclusive" => Some(Verdict::Inconclusive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    EmitReport,
    FixHarness,
    Requeue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvidenceKind {
    SourceCitation,
    DebuggerObservation,
    DocumentationExcerpt,
    ApiPrecondition,
}

impl EvidenceKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace(['_', '-', ' '], "").as_str() {
            "source" | "sourcecitation" => Some(EvidenceKind::SourceCitation),
            "debugger" | "debuggerobservation" => Some(EvidenceKind::DebuggerObservation),
            "doc" | "documentation" | "documentationexcerpt" => Some(EvidenceKind::DocumentationExcerpt),
            "precondition" | "apiprecondition" => Some(EvidenceKind::ApiPrecondition),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub kind: EvidenceKind,
    /// `file:line` for source, the probe for debugger output, the API name for preconditions.
    pub reference: String,
    pub detail: String,
}

impl Evidence {
    fn supports_library_bug(&self) -> bool {
        match self.kind {
            EvidenceKind::SourceCitation => self.reference.starts_with("src/"),
            EvidenceKind::DebuggerObservation => !self.detail.trim().is_empty(),
            _ => false,
        }
    }

    fn supports_harness_error(&self) -> bool {
        self.kind == EvidenceKind::ApiPrecondition
            && !self.reference.trim().is_empty()
            && !self.detail.trim().is_empty()
    }
}

/// What the crash analyzer concluded, before the evidence rules are applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentJudgment {
    pub verdict: Verdict,
    pub evidence: Vec<Evidence>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageVerdict {
    pub group_key: String,
    pub harness_id: String,
    pub verdict: Verdict,
    pub recommended_action: Action,
    pub evidence: Vec<Evidence>,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downgraded_from: Option<Verdict>,
}

/// Applies the evidence rules to the analyzer's judgment. A library bug needs
/// a library source citation or a debugger observation, a harness error needs
/// a violated API precondition, and anything short of that is inconclusive.
pub fn classify_crash(group: &CrashGroup, judgment: &AgentJudgment) -> TriageVerdict {
    let rep = group.representative();
    let supported = !rep.frames.is_empty()
        && match judgment.verdict {
            Verdict::LibraryBug => judgment.evidence.iter().any(Evidence::supports_library_bug),
            Verdict::HarnessError => judgment.evidence.iter().any(Evidence::supports_harness_error),
            Verdict::Inconclusive => true,
        };
    let verdict = if supported { judgment.verdict } else { Verdict::Inconclusive };
    TriageVerdict {
        group_key: group.group_key.clone(),
        harness_id: rep.harness_id.clone(),
        verdict,
        recommended_action: verdict.action(),
        evidence: judgment.evidence.clone(),
        rationale: judgment.rationale.clone(),
        downgraded_from: (verdict != judgment.verdict).then_some(judgment.verdict),
    }
}
