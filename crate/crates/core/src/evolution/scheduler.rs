//! The end-to-end loop: setup agents, then alternating exploration,
//! coverage-driven and crash-driven evolution until the budget runs out.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::guidance::{GuidanceKind, HarnessGuidance};
use super::routing::{route_crash_feedback, FeedbackLedger, NextAction, MAX_HARNESS_FIX_ROUNDS};
use super::strategy::{choose_strategy, deep_request, surface_request, Strategy, DEFAULT_STRATEGY_THRESHOLD};
use crate::agent::{
    run_agent_loop, select_next_agent, write_log, AgentOutcome, AgentRole, AgentStatus, BackendError,
    FeedbackSignals, ModelBackend, ToolRegistry,
};
use crate::coverage::api_coverage_ratio;
use crate::fuzz::{Campaign, StopReason};
use crate::tools::{refresh_coverage, CrashContext, Session, ToolEnv};
use crate::triage::{dedup_crashes, emit_bug_report, CrashArtifact, CrashGroup, TriageVerdict, Verdict};
use crate::util::glob_files;
use crate::workspace::{ArtifactKind, Phase, PhaseEvent, TransitionError, Workspace, WorkspaceError};
use crate::Role;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionBudget {
    /// End-to-end seconds.
    pub wall_clock: f64,
    /// Seconds per campaign.
    pub per_campaign: f64,
    pub max_harness_fix_rounds: u32,
}

impl Default for EvolutionBudget {
    fn default() -> Self {
        Self {
            wall_clock: 24.0 * 3600.0,
            per_campaign: 3600.0,
            max_harness_fix_rounds: MAX_HARNESS_FIX_ROUNDS,
        }
    }
}

impl EvolutionBudget {
    pub fn check(&self) -> Result<(), String> {
        if self.wall_clock < 0.0 || self.per_campaign <= 0.0 {
            return Err("budgets must be positive".into());
        }
        if self.per_campaign > self.wall_clock && self.wall_clock > 0.0 {
            return Err(format!(
                "per-campaign budget {}s exceeds the wall-clock budget {}s",
                self.per_campaign, self.wall_clock
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("setup agent {role} failed ({status:?}); see {log}. Missing: {missing}")]
    SetupFailed {
        role: Role,
        status: AgentStatus,
        log: String,
        missing: String,
    },
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRun {
    pub seq: usize,
    pub role: Role,
    pub status: AgentStatus,
    pub log: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub id: String,
    pub harness: String,
    pub stop_reason: StopReason,
    pub duration: f64,
    pub features: u64,
    pub crashes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictSummary {
    pub group_key: String,
    pub harness: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downgraded_from: Option<Verdict>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub stop_reason: String,
    pub phases_visited: Vec<Phase>,
    pub harnesses: Vec<String>,
    pub campaigns: Vec<CampaignSummary>,
    pub branches_covered: u64,
    pub branches_total: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_coverage: Option<f64>,
    pub crash_groups: usize,
    pub verdicts: Vec<VerdictSummary>,
    pub bug_reports: Vec<String>,
    pub guidance: Vec<String>,
    pub retired_harnesses: Vec<String>,
    pub agent_runs: Vec<AgentRun>,
}

pub const SUMMARY_PATH: &str = "reports/summary/summary.json";
/// Consecutive failed agent invocations after which the run stops.
pub const MAX_CONSECUTIVE_FAILURES: usize = 3;

/// Everything the scheduler drives.
pub struct Evolution {
    pub ws: Workspace,
    pub env: ToolEnv,
    pub backend: Box<dyn ModelBackend>,
    pub registry: ToolRegistry,
    pub roles: BTreeMap<Role, AgentRole>,
    pub budget: EvolutionBudget,
    pub strategy_threshold: f64,
}

impl Evolution {
    pub fn new(ws: Workspace, env: ToolEnv, backend: Box<dyn ModelBackend>) -> Self {
        Self {
            ws,
            env,
            backend,
            registry: ToolRegistry::standard(),
            roles: Role::ALL.iter().map(|r| (*r, AgentRole::standard(*r))).collect(),
            budget: EvolutionBudget::default(),
            strategy_threshold: DEFAULT_STRATEGY_THRESHOLD,
        }
    }
}

struct Run<'a> {
    evo: &'a mut Evolution,
    started: f64,
    seq: usize,
    summary: Summary,
    harness_ready: Option<String>,
    guidance: Option<HarnessGuidance>,
    pending: VecDeque<CrashGroup>,
    known_groups: BTreeSet<String>,
    ledger: FeedbackLedger,
    failures: usize,
    stop: Option<String>,
}

fn next_harness_id(root: &std::path::Path) -> String {
    let mut n = 1;
    while root.join(format!("harnesses/h{n}.c")).exists() {
        n += 1;
    }
    format!("h{n}")
}

impl Run<'_> {
    fn elapsed(&self) -> f64 {
        self.evo.env.clock.now() - self.started
    }

    fn advance(&mut self, event: PhaseEvent) -> Result<(), EvolutionError> {
        let phase = self.evo.ws.advance(event)?;
        if !self.summary.phases_visited.contains(&phase) {
            self.summary.phases_visited.push(phase);
        }
        Ok(())
    }

    fn invoke(&mut self, role: Role, task: &str, expectations: Vec<String>) -> AgentOutcome {
        self.seq += 1;
        self.evo.env.session = Session::default();
        self.evo.ws.state.expectations = expectations;
        self.invoke_keep_session(role, task)
    }

    /// Runs an agent with whatever session state the caller prepared.
    fn invoke_keep_session(&mut self, role: Role, task: &str) -> AgentOutcome {
        let cfg = self.evo.roles.get(&role).cloned().unwrap_or_else(|| AgentRole::standard(role));
        let outcome = run_agent_loop(
            &cfg,
            task,
            self.evo.backend.as_mut(),
            &self.evo.registry,
            &mut self.evo.env,
            &mut self.evo.ws,
        );
        self.evo.ws.state.expectations.clear();
        let log = write_log(self.evo.ws.root(), self.seq, &outcome)
            .unwrap_or_else(|e| format!("(log not written: {e})"));
        let _ = self.evo.ws.save_state();
        self.summary.agent_runs.push(AgentRun {
            seq: self.seq,
            role,
            status: outcome.status.clone(),
            log,
        });
        if outcome.succeeded() {
            self.failures = 0;
        } else {
            self.failures += 1;
            let exhausted = BackendError::ScriptExhausted(role).to_string();
            if matches!(&outcome.status, AgentStatus::BackendFailed(m) if *m == exhausted) {
                self.stop = Some("model backend has no more turns".into());
            } else if self.failures >= MAX_CONSECUTIVE_FAILURES {
                self.stop = Some(format!("{MAX_CONSECUTIVE_FAILURES} consecutive agent failures"));
            }
        }
        outcome
    }

    fn setup(&mut self) -> Result<(), EvolutionError> {
        while self.evo.ws.state.phase == Phase::Setup {
            let role = select_next_agent(&self.evo.ws.state, &FeedbackSignals::default());
            let (task, kind, pattern) = match role {
                Role::LibraryBuilder => (
                    "Build the target library in src/ with fuzzing instrumentation: write src/build.sh and verify it with build_library.",
                    ArtifactKind::LibraryBuild,
                    "build/**/*.a",
                ),
                Role::DictionaryGenerator => (
                    "Create a fuzzing dictionary for the target library's input format under dict/ (e.g. dict/target.dict).",
                    ArtifactKind::Dictionary,
                    "dict/*.dict",
                ),
                Role::SeedGenerator => (
                    "Create a seed corpus of small valid inputs for the target library under corpus/.",
                    ArtifactKind::SeedCorpus,
                    "corpus/*",
                ),
                _ => {
                    self.advance(PhaseEvent::SetupDone)?;
                    break;
                }
            };
            let outcome = self.invoke(role, task, Vec::new());
            if !outcome.succeeded() {
                let run = self.summary.agent_runs.last().expect("just pushed");
                return Err(EvolutionError::SetupFailed {
                    role,
                    status: outcome.status.clone(),
                    log: run.log.clone(),
                    missing: outcome.report.missing_artifacts.join(", "),
                });
            }
            for path in glob_files(self.evo.ws.root(), pattern) {
                self.evo.ws.state.record_artifact(kind, path);
            }
            let _ = self.evo.ws.save_state();
        }
        Ok(())
    }

    fn harness_task(&self, id: &str) -> String {
        match &self.guidance {
            Some(g) if g.kind == GuidanceKind::CrashFix => format!(
                "Fix harnesses/{id}.c: the crash analysis found it violates an API precondition. Rewrite it and compile it to harnesses/{id}.\n{}",
                g.render()
            ),
            Some(g) => format!("Write a new harness harnesses/{id}.c and compile it to harnesses/{id}.\n{}", g.render()),
            None => {
                let uncovered: Vec<String> = self
                    .evo
                    .env
                    .coverage
                    .current
                    .as_ref()
                    .map(|v| v.catalog.uncovered().map(|e| e.name.clone()).collect())
                    .unwrap_or_default();
                let mut t = format!(
                    "Write a libFuzzer harness harnesses/{id}.c exercising the library's public API and compile it to harnesses/{id}."
                );
                if !uncovered.is_empty() {
                    t.push_str(&format!("\nAPIs not reached so far: {}", uncovered.join(", ")));
                }
                t
            }
        }
    }

    fn generate_harness(&mut self) {
        let root = self.evo.ws.root().to_path_buf();
        let id = match &self.guidance {
            Some(g) if g.kind == GuidanceKind::CrashFix => g.harness_id.clone().unwrap_or_else(|| next_harness_id(&root)),
            _ => next_harness_id(&root),
        };
        // a rewrite must produce a fresh binary
        let _ = fs::remove_file(root.join(format!("harnesses/{id}")));
        let task = self.harness_task(&id);
        let outcome = self.invoke(Role::HarnessGenerator, &task, vec![format!("harnesses/{id}")]);
        self.guidance = None;
        if outcome.succeeded() {
            let src = format!("harnesses/{id}.c");
            self.evo.ws.state.record_artifact(ArtifactKind::Harness, src);
            if !self.summary.harnesses.contains(&id) {
                self.summary.harnesses.push(id.clone());
            }
            self.harness_ready = Some(id);
        }
    }

    fn fuzz(&mut self) -> Result<(), EvolutionError> {
        let Some(hid) = self.harness_ready.take() else { return Ok(()) };
        let root = self.evo.ws.root().to_path_buf();
        let remaining = (self.evo.budget.wall_clock - self.elapsed()).max(0.0);
        self.evo.env.fuzz.policy.budget = self.evo.budget.per_campaign.min(remaining).max(self.evo.env.fuzz.policy.tick.min(remaining));
        let cid = crate::fuzz::next_campaign_id(&root);
        let task = format!("Run a fuzzing campaign on harness {hid} (binary harnesses/{hid}).");
        let outcome = self.invoke(Role::FuzzerExecutor, &task, vec![Campaign::record_path(&cid)]);
        let campaigns = self.evo.env.session.campaigns.clone();
        if !outcome.succeeded() && campaigns.is_empty() {
            return Ok(());
        }
        let mut crashed = false;
        for cid in campaigns {
            let Ok(c) = Campaign::load(&root, &cid) else { continue };
            self.evo.ws.state.record_artifact(ArtifactKind::CampaignResult, Campaign::record_path(&cid));
            self.summary.campaigns.push(CampaignSummary {
                id: c.id.clone(),
                harness: c.harness_id.clone(),
                stop_reason: c.stop_reason,
                duration: c.duration(),
                features: c.final_features(),
                crashes: c.crashes.len(),
            });
            // coverage is re-measured after every campaign
            let _ = refresh_coverage(&mut self.evo.env, &c.id, &c.harness_id);
            let root_str = root.to_string_lossy().into_owned();
            let artifacts: Vec<CrashArtifact> = c
                .crashes
                .iter()
                .map(|f| CrashArtifact::from_crash(f, &c.harness_id, &root_str))
                .collect();
            for g in dedup_crashes(artifacts) {
                if self.known_groups.insert(g.group_key.clone()) {
                    self.pending.push_back(g);
                    crashed = true;
                }
            }
        }
        self.summary.crash_groups = self.known_groups.len();
        self.advance(if crashed { PhaseEvent::CampaignCrashed } else { PhaseEvent::CampaignNoCrash })
    }

    fn triage(&mut self) -> Result<(), EvolutionError> {
        let Some(group) = self.pending.pop_front() else {
            return self.triage_done();
        };
        let key = group.short_key().to_string();
        let rep = group.representative().clone();
        let task = format!(
            "Triage crash group {key}: {} in harness harnesses/{}.c on input {} ({} member(s)). Decide whether it is a library bug or a harness error and submit the verdict.",
            rep.signal_kind.label(),
            rep.harness_id,
            rep.input_file,
            group.members.len()
        );
        self.seq += 1;
        self.evo.env.session = Session {
            crash: Some(CrashContext {
                group: group.clone(),
                minimized: None,
                observations: Vec::new(),
            }),
            ..Session::default()
        };
        self.evo.ws.state.expectations = vec![format!("reports/verdicts/{key}.json")];
        self.invoke_keep_session(Role::CrashAnalyzer, &task);
        let minimized = self.evo.env.session.crash.as_ref().and_then(|c| c.minimized.clone());
        let verdict = self.evo.env.session.verdict.clone().unwrap_or_else(|| TriageVerdict {
            group_key: group.group_key.clone(),
            harness_id: rep.harness_id.clone(),
            verdict: Verdict::Inconclusive,
            recommended_action: Verdict::Inconclusive.action(),
            evidence: Vec::new(),
            rationale: "the crash analyzer did not submit a verdict".into(),
            downgraded_from: None,
        });
        if self.evo.env.session.verdict.is_some() {
            self.evo
                .ws
                .state
                .record_artifact(ArtifactKind::TriageVerdict, format!("reports/verdicts/{key}.json"));
        }
        self.summary.verdicts.push(VerdictSummary {
            group_key: key.clone(),
            harness: verdict.harness_id.clone(),
            verdict: verdict.verdict,
            downgraded_from: verdict.downgraded_from,
        });
        let fallback = rep
            .frames
            .iter()
            .find(|f| f.in_project && f.file.starts_with("src/"))
            .map(|f| f.function.clone());
        match route_crash_feedback(&verdict, &mut self.ledger, self.evo.budget.max_harness_fix_rounds, fallback.as_deref()) {
            NextAction::EmitReport => {
                if let Ok(r) = emit_bug_report(self.evo.ws.root(), &verdict, &group, minimized.as_deref()) {
                    self.summary.bug_reports.push(r.path);
                }
            }
            NextAction::FixHarness(g) => self.guidance = Some(g),
            NextAction::RetireHarness(h) => {
                if !self.summary.retired_harnesses.contains(&h) {
                    self.summary.retired_harnesses.push(h);
                }
            }
            NextAction::Requeue => self.pending.push_back(group),
            NextAction::RetireCrash => {}
        }
        if self.pending.is_empty() {
            self.triage_done()?;
        }
        Ok(())
    }

    fn triage_done(&mut self) -> Result<(), EvolutionError> {
        if self.evo.ws.state.phase == Phase::CrashEvolution {
            self.advance(PhaseEvent::TriageDone)?;
        }
        Ok(())
    }

    fn analyze_coverage(&mut self) -> Result<(), EvolutionError> {
        let request = self.evo.env.coverage.current.as_ref().and_then(|view| {
            let strategy = choose_strategy(&view.catalog, self.evo.strategy_threshold).unwrap_or(Strategy::DeepPhase);
            match strategy {
                Strategy::SurfacePhase => {
                    surface_request(&view.root, &view.catalog).or_else(|| deep_request(&view.root, &view.catalog))
                }
                Strategy::DeepPhase => deep_request(&view.root, &view.catalog),
            }
        });
        let Some(request) = request else {
            if self.evo.env.coverage.current.is_some() {
                self.stop = Some("every measured branch is covered".into());
            }
            return self.advance(PhaseEvent::AnalysisDone);
        };
        let next = glob_files(self.evo.ws.root(), "reports/guidance/g*.json").len() + 1;
        let task = request.render();
        self.seq += 1;
        self.evo.env.session = Session {
            guidance_request: Some(request),
            ..Session::default()
        };
        self.evo.ws.state.expectations = vec![format!("reports/guidance/g{next:03}.json")];
        self.invoke_keep_session(Role::CoverageAnalyzer, &task);
        if let Some((g, path)) = self.evo.env.session.guidance.take() {
            self.summary.guidance.push(path);
            self.guidance = Some(g);
        }
        self.advance(PhaseEvent::AnalysisDone)
    }

    fn finish(&mut self) -> Result<Summary, EvolutionError> {
        if self.evo.ws.state.phase != Phase::Done {
            self.advance(PhaseEvent::BudgetExhausted)?;
        }
        self.summary.stop_reason = self.stop.clone().unwrap_or_else(|| "wall-clock budget exhausted".into());
        if let Some(v) = &self.evo.env.coverage.current {
            self.summary.branches_covered = v.root.covered;
            self.summary.branches_total = v.root.total;
            self.summary.api_coverage = api_coverage_ratio(&v.catalog).ok();
        }
        self.summary.retired_harnesses = self.ledger.retired_harnesses.clone();
        let root = self.evo.ws.root();
        fs::create_dir_all(root.join("reports/summary")).map_err(|e| WorkspaceError::io("creating reports/summary", e))?;
        let text = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        fs::write(root.join(SUMMARY_PATH), text + "\n").map_err(|e| WorkspaceError::io(format!("writing {SUMMARY_PATH}"), e))?;
        self.evo.ws.save_state()?;
        Ok(self.summary.clone())
    }
}

fn new_run(evo: &mut Evolution) -> Run<'_> {
    let started = evo.env.clock.now();
    let first_phase = evo.ws.state.phase;
    Run {
        evo,
        started,
        seq: 0,
        summary: Summary {
            phases_visited: vec![first_phase],
            ..Summary::default()
        },
        harness_ready: None,
        guidance: None,
        pending: VecDeque::new(),
        known_groups: BTreeSet::new(),
        ledger: FeedbackLedger::default(),
        failures: 0,
        stop: None,
    }
}

/// Crash groups across all recorded campaigns, in campaign order.
pub fn recorded_crash_groups(ws: &Workspace) -> Vec<CrashGroup> {
    let root = ws.root();
    let root_str = root.to_string_lossy().into_owned();
    let mut artifacts = Vec::new();
    for rel in glob_files(root, "campaigns/*/campaign.json") {
        let Some(cid) = rel.split('/').nth(1) else { continue };
        let Ok(c) = Campaign::load(root, cid) else { continue };
        artifacts.extend(c.crashes.iter().map(|f| CrashArtifact::from_crash(f, &c.harness_id, &root_str)));
    }
    dedup_crashes(artifacts)
}

/// Runs the crash analyzer on every recorded crash group that has no verdict
/// file yet. Log numbering continues after the existing logs.
pub fn triage_pending(evo: &mut Evolution) -> Result<Vec<VerdictSummary>, EvolutionError> {
    let groups: Vec<CrashGroup> = recorded_crash_groups(&evo.ws)
        .into_iter()
        .filter(|g| !evo.ws.root().join(format!("reports/verdicts/{}.json", g.short_key())).exists())
        .collect();
    let logs = glob_files(evo.ws.root(), "logs/*.json").len();
    let mut run = new_run(evo);
    run.seq = logs;
    for g in &groups {
        run.known_groups.insert(g.group_key.clone());
    }
    run.pending = groups.into();
    while !run.pending.is_empty() && run.stop.is_none() {
        run.triage()?;
    }
    run.evo.ws.save_state()?;
    Ok(run.summary.verdicts)
}

/// Runs the whole workflow until the budget is spent, the backend runs out of
/// turns, or agents keep failing. A failing setup agent aborts the run.
pub fn run_end_to_end(evo: &mut Evolution) -> Result<Summary, EvolutionError> {
    let mut run = new_run(evo);
    if run.evo.budget.wall_clock <= 0.0 {
        return run.finish();
    }
    if run.evo.ws.state.phase == Phase::Setup {
        run.setup()?;
    }
    while run.stop.is_none() && run.elapsed() < run.evo.budget.wall_clock && run.evo.ws.state.phase != Phase::Done {
        let signals = FeedbackSignals {
            harness_ready: run.harness_ready.is_some(),
            pending_crashes: run.pending.len(),
            coverage_plateau: false,
        };
        match select_next_agent(&run.evo.ws.state, &signals) {
            Role::CrashAnalyzer => run.triage()?,
            Role::FuzzerExecutor => run.fuzz()?,
            Role::HarnessGenerator => run.generate_harness(),
            Role::CoverageAnalyzer => run.analyze_coverage()?,
            other => {
                run.stop = Some(format!("no scheduling rule for {other}"));
            }
        }
    }
    run.finish()
}
