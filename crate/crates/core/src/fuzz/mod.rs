//! Fuzzing campaigns: the plateau rule, the poll loop, and corpus merging.

mod libfuzzer;
mod stub;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::coverage::CoverageSnapshot;
use crate::util::sha256_hex;

pub use libfuzzer::LibFuzzerAdapter;
pub use stub::{StubAdapter, StubTrace, TraceStep};

#[derive(Debug, Error)]
pub enum FuzzError {
    #[error("cannot start fuzzer: {0}")]
    Spawn(String),
    #[error("trace {path} line {line}: {reason}")]
    Trace {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid plateau policy: {0}")]
    Policy(String),
}

impl FuzzError {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        FuzzError::Io {
            context: context.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauPolicy {
    pub threshold: f64,
    pub window: f64,
    pub tick: f64,
    pub budget: f64,
}

impl Default for PlateauPolicy {
    fn default() -> Self {
        Self {
            threshold: 1e-4,
            window: 60.0,
            tick: 10.0,
            budget: 3600.0,
        }
    }
}

impl PlateauPolicy {
    pub fn check(&self) -> Result<(), FuzzError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(FuzzError::Policy(format!("threshold {} not in (0,1)", self.threshold)));
        }
        if !(self.tick > 0.0 && self.tick <= self.window && self.window <= self.budget) {
            return Err(FuzzError::Policy(format!(
                "need 0 < tick ({}) <= window ({}) <= budget ({})",
                self.tick, self.window, self.budget
            )));
        }
        Ok(())
    }
}

/// Relative feature growth between two polls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Growth {
    Rate(f64),
    /// Nothing seen yet, so no rate exists; never counts toward a plateau.
    Growing,
}

impl Growth {
    pub fn below(self, threshold: f64) -> bool {
        matches!(self, Growth::Rate(r) if r < threshold)
    }
}

pub fn growth_rate(n_prev: u64, n_curr: u64) -> Growth {
    if n_prev == 0 {
        return Growth::Growing;
    }
    Growth::Rate((n_curr as f64 - n_prev as f64) / n_prev as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    CrashFound,
    Plateau,
    BudgetExhausted,
    FuzzerDied,
}

/// A crashing input saved by the fuzzer, with the sanitizer report that came with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashFile {
    /// Workspace-relative path of the crashing input.
    pub input_file: String,
    pub raw_report: String,
}

/// Where a campaign runs. All paths except `root` are workspace-relative.
#[derive(Debug, Clone)]
pub struct CampaignSpec {
    pub id: String,
    pub harness_id: String,
    pub root: PathBuf,
    pub binary: String,
    pub corpus: String,
    pub dict: Option<String>,
}

impl CampaignSpec {
    pub fn dir(&self) -> String {
        format!("campaigns/{}", self.id)
    }

    pub fn crash_dir(&self) -> String {
        format!("campaigns/{}/crashes", self.id)
    }

    pub fn queue_dir(&self) -> String {
        format!("campaigns/{}/queue", self.id)
    }

    pub fn abs(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Poll {
    pub feature_count: u64,
    pub new_crashes: Vec<CrashFile>,
    /// Exit status if the fuzzer process has ended.
    pub exited: Option<i32>,
}

pub trait FuzzerAdapter: Send {
    fn spawn(&mut self, spec: &CampaignSpec) -> Result<(), FuzzError>;
    fn poll(&mut self) -> Result<Poll, FuzzError>;
    /// Terminates the fuzzer and returns the workspace-relative inputs it found
    /// to exercise new features.
    fn stop(&mut self) -> Vec<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub id: String,
    pub harness_id: String,
    pub started_at: f64,
    pub snapshots: Vec<CoverageSnapshot>,
    pub crashes: Vec<CrashFile>,
    pub stop_reason: StopReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    #[serde(default)]
    pub new_inputs: Vec<String>,
}

impl Campaign {
    pub fn record_path(id: &str) -> String {
        format!("campaigns/{id}/campaign.json")
    }

    pub fn save(&self, root: &Path) -> Result<String, FuzzError> {
        let rel = Self::record_path(&self.id);
        let path = root.join(&rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| FuzzError::io(format!("creating {}", dir.display()), e))?;
        }
        let text = serde_json::to_string_pretty(self).expect("campaign serializes");
        fs::write(&path, text + "\n").map_err(|e| FuzzError::io(format!("writing {rel}"), e))?;
        Ok(rel)
    }

    pub fn load(root: &Path, id: &str) -> Result<Self, FuzzError> {
        let rel = Self::record_path(id);
        let text = fs::read_to_string(root.join(&rel)).map_err(|e| FuzzError::io(format!("reading {rel}"), e))?;
        serde_json::from_str(&text).map_err(|e| FuzzError::Trace {
            path: rel,
            line: e.line(),
            reason: e.to_string(),
        })
    }

    pub fn final_features(&self) -> u64 {
        self.snapshots.last().map(|s| s.feature_count).unwrap_or(0)
    }

    pub fn duration(&self) -> f64 {
        self.snapshots.last().map(|s| s.taken_at).unwrap_or(0.0)
    }
}

/// Next free campaign id of the form `c001`.
pub fn next_campaign_id(root: &Path) -> String {
    let mut n = 1;
    while root.join(format!("campaigns/c{n:03}")).exists() {
        n += 1;
    }
    format!("c{n:03}")
}

/// Runs one campaign to its stop condition. Polls once at start and then every
/// `policy.tick` seconds. Within a poll a crash beats an exit, which beats a
/// plateau, which beats the budget.
pub fn run_campaign(
    spec: &CampaignSpec,
    adapter: &mut dyn FuzzerAdapter,
    policy: &PlateauPolicy,
    clock: &dyn Clock,
) -> Campaign {
    let started_at = clock.now();
    let mut campaign = Campaign {
        id: spec.id.clone(),
        harness_id: spec.harness_id.clone(),
        started_at,
        snapshots: Vec::new(),
        crashes: Vec::new(),
        stop_reason: StopReason::FuzzerDied,
        diagnostic: None,
        new_inputs: Vec::new(),
    };
    if let Err(e) = adapter.spawn(spec) {
        campaign.diagnostic = Some(e.to_string());
        return campaign;
    }
    let mut prev: Option<u64> = None;
    // time of the last poll that still showed growth
    let mut flat_since: Option<f64> = None;
    let reason = loop {
        let elapsed = clock.now() - started_at;
        let poll = match adapter.poll() {
            Ok(p) => p,
            Err(e) => {
                campaign.diagnostic = Some(e.to_string());
                break StopReason::FuzzerDied;
            }
        };
        let features = poll.feature_count.max(prev.unwrap_or(0));
        campaign.snapshots.push(CoverageSnapshot {
            taken_at: elapsed,
            feature_count: features,
            root: None,
        });
        if !poll.new_crashes.is_empty() {
            campaign.crashes.extend(poll.new_crashes);
            break StopReason::CrashFound;
        }
        if let Some(code) = poll.exited {
            campaign.diagnostic = Some(format!("fuzzer exited with status {code}"));
            break StopReason::FuzzerDied;
        }
        let flat = prev.is_some_and(|p| growth_rate(p, features).below(policy.threshold));
        if !flat {
            flat_since = Some(elapsed);
        }
        if flat && flat_since.is_some_and(|s| elapsed - s >= policy.window - 1e-9) {
            break StopReason::Plateau;
        }
        if elapsed >= policy.budget - 1e-9 {
            break StopReason::BudgetExhausted;
        }
        prev = Some(features);
        let remaining = policy.budget - elapsed;
        clock.sleep(policy.tick.min(remaining));
    };
    campaign.stop_reason = reason;
    campaign.new_inputs = adapter.stop();
    campaign
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeSummary {
    pub added: usize,
    pub skipped: usize,
    pub failed: Vec<(String, String)>,
}

/// Copies the campaign's new-feature inputs into `corpus_dir` (workspace-relative)
/// under content-hash names. Inputs already present by hash are skipped.
pub fn merge_corpus(root: &Path, campaign: &Campaign, corpus_dir: &str) -> MergeSummary {
    let mut summary = MergeSummary::default();
    let dest_dir = root.join(corpus_dir);
    if let Err(e) = fs::create_dir_all(&dest_dir) {
        summary.failed.push((corpus_dir.to_string(), e.to_string()));
        return summary;
    }
    for rel in &campaign.new_inputs {
        let bytes = match fs::read(root.join(rel)) {
            Ok(b) => b,
            Err(e) => {
                summary.failed.push((rel.clone(), e.to_string()));
                continue;
            }
        };
        let dest = dest_dir.join(sha256_hex(&bytes));
        if dest.exists() {
            summary.skipped += 1;
            continue;
        }
        match fs::write(&dest, &bytes) {
            Ok(()) => summary.added += 1,
            Err(e) => summary.failed.push((rel.clone(), e.to_string())),
        }
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn growth_rate_cases() {
        assert_eq!(growth_rate(1000, 1000), Growth::Rate(0.0));
        assert_eq!(growth_rate(1000, 1001), Growth::Rate(0.001));
        assert_eq!(growth_rate(0, 5), Growth::Growing);
        assert!(!Growth::Growing.below(1.0));
    }

    #[test]
    fn policy_bounds() {
        assert!(PlateauPolicy::default().check().is_ok());
        let bad = PlateauPolicy { threshold: 0.0, ..Default::default() };
        assert!(bad.check().is_err());
        let bad = PlateauPolicy { tick: 120.0, ..Default::default() };
        assert!(bad.check().is_err());
    }

    #[test]
    fn campaign_ids_count_up() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(next_campaign_id(dir.path()), "c001");
        fs::create_dir_all(dir.path().join("campaigns/c001")).unwrap();
        assert_eq!(next_campaign_id(dir.path()), "c002");
    }
}
