use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Setup,
    Exploration,
    CoverageEvolution,
    CrashEvolution,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseEvent {
    SetupDone,
    CampaignNoCrash,
    CampaignCrashed,
    TriageDone,
    AnalysisDone,
    BudgetExhausted,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for PhaseEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("illegal workflow event {event} in phase {phase}")]
pub struct TransitionError {
    pub phase: Phase,
    pub event: PhaseEvent,
}

impl Phase {
    /// The workflow graph. `BudgetExhausted` is legal everywhere and `Done` is absorbing.
    pub fn next(self, event: PhaseEvent) -> Result<Phase, TransitionError> {
        use Phase::*;
        use PhaseEvent::*;
        match (self, event) {
            (_, BudgetExhausted) => Ok(Done),
            (Setup, SetupDone) => Ok(Exploration),
            (Exploration, CampaignNoCrash) => Ok(CoverageEvolution),
            (Exploration, CampaignCrashed) => Ok(CrashEvolution),
            (CoverageEvolution, AnalysisDone) => Ok(Exploration),
            (CrashEvolution, TriageDone) => Ok(Exploration),
            (phase, event) => Err(TransitionError { phase, event }),
        }
    }
}

/// Artifact categories tracked by the progress ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArtifactKind {
    LibraryBuild,
    Dictionary,
    SeedCorpus,
    Harness,
    CampaignResult,
    TriageVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletedStep {
    pub role: Role,
    pub at: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceState {
    pub phase: Phase,
    pub completed_steps: Vec<CompletedStep>,
    pub artifact_index: BTreeMap<ArtifactKind, Vec<String>>,
    /// Extra workspace-relative paths the current agent step must produce.
    #[serde(default)]
    pub expectations: Vec<String>,
}

impl Default for WorkspaceState {
    fn default() -> Self {
        Self::new()
    }
}

impl WorkspaceState {
    pub fn new() -> Self {
        Self {
            phase: Phase::Setup,
            completed_steps: Vec::new(),
            artifact_index: BTreeMap::new(),
            expectations: Vec::new(),
        }
    }

    pub fn advance(&mut self, event: PhaseEvent) -> Result<Phase, TransitionError> {
        self.phase = self.phase.next(event)?;
        Ok(self.phase)
    }

    /// Appends a ledger entry; timestamps are clamped so the ledger never goes backwards.
    pub fn record_step(&mut self, role: Role, at: f64, passed: bool) {
        let floor = self.completed_steps.last().map_or(0.0, |s| s.at);
        self.completed_steps.push(CompletedStep {
            role,
            at: at.max(floor),
            passed,
        });
    }

    pub fn record_artifact(&mut self, kind: ArtifactKind, path: impl Into<String>) {
        let path = path.into();
        let paths = self.artifact_index.entry(kind).or_default();
        if !paths.contains(&path) {
            paths.push(path);
        }
    }

    pub fn has_artifact(&self, kind: ArtifactKind) -> bool {
        self.artifact_index.get(&kind).is_some_and(|v| !v.is_empty())
    }

    pub fn artifacts(&self, kind: ArtifactKind) -> &[String] {
        self.artifact_index.get(&kind).map_or(&[], |v| v.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Phase::*;
    use PhaseEvent::*;

    const PHASES: [Phase; 5] = [Setup, Exploration, CoverageEvolution, CrashEvolution, Done];
    const EVENTS: [PhaseEvent; 6] = [
        SetupDone,
        CampaignNoCrash,
        CampaignCrashed,
        TriageDone,
        AnalysisDone,
        BudgetExhausted,
    ];

    #[test]
    fn workflow_order() {
        assert_eq!(Setup.next(SetupDone), Ok(Exploration));
        assert_eq!(Exploration.next(CampaignCrashed), Ok(CrashEvolution));
        assert_eq!(Exploration.next(CampaignNoCrash), Ok(CoverageEvolution));
        assert_eq!(CoverageEvolution.next(AnalysisDone), Ok(Exploration));
        assert_eq!(CrashEvolution.next(TriageDone), Ok(Exploration));
    }

    #[test]
    fn illegal_event_is_an_error() {
        let err = Setup.next(TriageDone).unwrap_err();
        assert_eq!(err.phase, Setup);
        assert_eq!(err.event, TriageDone);
    }

    #[test]
    fn done_reachable_everywhere_and_absorbing() {
        for p in PHASES {
            assert_eq!(p.next(BudgetExhausted), Ok(Done));
        }
        for e in EVENTS {
            if let Ok(p) = Done.next(e) {
                assert_eq!(p, Done);
            }
        }
    }

    #[test]
    fn crash_evolution_only_from_exploration() {
        for p in PHASES {
            for e in EVENTS {
                if p.next(e) == Ok(CrashEvolution) {
                    assert_eq!(p, Exploration);
                }
            }
        }
        // nothing leads back to Setup
        for p in PHASES {
            for e in EVENTS {
                assert_ne!(p.next(e), Ok(Setup));
            }
        }
    }

    #[test]
    fn ledger_timestamps_never_decrease() {
        let mut s = WorkspaceState::new();
        s.record_step(Role::LibraryBuilder, 5.0, true);
        s.record_step(Role::SeedGenerator, 3.0, false);
        assert_eq!(s.completed_steps[1].at, 5.0);
    }

    #[test]
    fn state_serializes_round_trip() {
        let mut s = WorkspaceState::new();
        s.record_artifact(ArtifactKind::Dictionary, "dict/a.dict");
        s.record_artifact(ArtifactKind::Dictionary, "dict/a.dict");
        s.advance(SetupDone).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: WorkspaceState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.artifacts(ArtifactKind::Dictionary).len(), 1);
    }
}
