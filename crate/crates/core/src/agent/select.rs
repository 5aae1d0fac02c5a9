use serde::{Deserialize, Serialize};

use crate::workspace::{ArtifactKind, Phase, WorkspaceState};
use crate::Role;

/// What the scheduler knows beyond the phase when picking the next agent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackSignals {
    /// A compiled harness is waiting for its campaign.
    pub harness_ready: bool,
    /// Crash groups not yet triaged.
    pub pending_crashes: usize,
    /// The last campaign reached a plateau or its budget.
    pub coverage_plateau: bool,
}

/// Picks the next agent. Setup agents run in fixed order until each has its
/// artifact. Pending crashes win over coverage feedback.
pub fn select_next_agent(state: &WorkspaceState, signals: &FeedbackSignals) -> Role {
    match state.phase {
        Phase::Setup => {
            if !state.has_artifact(ArtifactKind::LibraryBuild) {
                Role::LibraryBuilder
            } else if !state.has_artifact(ArtifactKind::Dictionary) {
                Role::DictionaryGenerator
            } else if !state.has_artifact(ArtifactKind::SeedCorpus) {
                Role::SeedGenerator
            } else {
                Role::HarnessGenerator
            }
        }
        _ if signals.pending_crashes > 0 => Role::CrashAnalyzer,
        Phase::Exploration if signals.harness_ready => Role::FuzzerExecutor,
        Phase::Exploration => Role::HarnessGenerator,
        Phase::CrashEvolution => Role::CrashAnalyzer,
        Phase::CoverageEvolution | Phase::Done => Role::CoverageAnalyzer,
    }
}
