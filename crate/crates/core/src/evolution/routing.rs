use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::guidance::{crash_fix_guidance, HarnessGuidance};
use crate::triage::{TriageVerdict, Verdict};

pub const MAX_HARNESS_FIX_ROUNDS: u32 = 3;
pub const MAX_REQUEUES: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum NextAction {
    /// Regenerate the harness under this guidance.
    FixHarness(HarnessGuidance),
    /// Fix budget spent; stop fuzzing this harness.
    RetireHarness(String),
    /// Write the bug report, then resume coverage evolution.
    EmitReport,
    /// Analyze the crash group again.
    Requeue,
    /// Give up on the crash group.
    RetireCrash,
}

/// Counts fix rounds per harness and requeues per crash group.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackLedger {
    pub fix_rounds: BTreeMap<String, u32>,
    pub requeues: BTreeMap<String, u32>,
    pub retired_harnesses: Vec<String>,
}

impl FeedbackLedger {
    pub fn is_retired(&self, harness_id: &str) -> bool {
        self.retired_harnesses.iter().any(|h| h == harness_id)
    }
}

/// Decides what a finished triage leads to. `fallback_api` names an API to
/// target when the evidence names none.
pub fn route_crash_feedback(
    verdict: &TriageVerdict,
    ledger: &mut FeedbackLedger,
    max_fix_rounds: u32,
    fallback_api: Option<&str>,
) -> NextAction {
    match verdict.verdict {
        Verdict::LibraryBug => NextAction::EmitReport,
        Verdict::HarnessError => {
            let h = &verdict.harness_id;
            let round = ledger.fix_rounds.entry(h.clone()).or_default();
            *round += 1;
            match crash_fix_guidance(verdict, fallback_api) {
                Some(g) if *round <= max_fix_rounds => NextAction::FixHarness(g),
                _ => {
                    if !ledger.is_retired(h) {
                        ledger.retired_harnesses.push(h.clone());
                    }
                    NextAction::RetireHarness(h.clone())
                }
            }
        }
        Verdict::Inconclusive => {
            let n = ledger.requeues.entry(verdict.group_key.clone()).or_default();
            if *n < MAX_REQUEUES {
                *n += 1;
                NextAction::Requeue
            } else {
                NextAction::RetireCrash
            }
        }
    }
}
