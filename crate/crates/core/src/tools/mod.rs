//! Agent tools: file and command access, library and harness builds, web
//! retrieval, campaigns, coverage views and crash inspection.
//!
//! Every path an agent passes in goes through the workspace sandbox. Tools
//! report failures as [`ToolFailure`] values; nothing here panics on agent input.

mod args;
mod build;
mod command;
mod coverage_tools;
mod crash_tools;
mod files;
mod fuzzing;
pub mod web;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::coverage::{ApiCatalog, CoverageFilter, CoverageNode};
use crate::evolution::{GuidanceRequest, HarnessGuidance};
use crate::fuzz::{FuzzerAdapter, PlateauPolicy, StubAdapter, StubTrace};
use crate::triage::{CrashGroup, Debugger, NoDebugger, Observation, TriageVerdict};
use crate::workspace::{Sandbox, SandboxViolation};

pub use args::Args;
pub use build::{
    build_library, compile_harness, probe_instrumentation, BuildOutcome, BuildRecipe,
    BuildSettings, INSTRUMENTATION_MARKERS,
};
pub use command::{command_env, run_command, CommandOutcome, KILLED_EXIT};
pub use coverage_tools::{refresh_coverage, CoverageSource, FixtureCoverage, LlvmCoverage};
pub use crash_tools::{looks_like_crash, reproduces, CONTEXT_LINES, REPRODUCE_RUNS};
pub use fuzzing::run_fuzzer;
pub use files::{apply_edit, search_files, view_file, write_file, EditSummary, DEFAULT_WINDOW};
pub use web::{
    prune_dictionary, FixtureProvider, LiveProvider, MatchKind, RetrievalLedger, SearchHit,
    WebProvider, WebState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    SandboxViolation,
    Timeout,
    NonzeroExit,
    BadArguments,
    ProviderUnavailable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolFailure {
    pub kind: ErrorKind,
    pub message: String,
}

impl ToolFailure {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn bad_args(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::BadArguments, message)
    }
}

impl From<SandboxViolation> for ToolFailure {
    fn from(v: SandboxViolation) -> Self {
        Self::new(ErrorKind::SandboxViolation, v.to_string())
    }
}

pub type ToolOutput = Result<String, ToolFailure>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ToolSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub params: Vec<ParamSpec>,
}

pub(crate) fn p(name: &'static str, description: &'static str, required: bool) -> ParamSpec {
    ParamSpec {
        name,
        description,
        required,
    }
}

pub trait Tool: Send + Sync {
    fn spec(&self) -> ToolSpec;
    fn call(&self, args: &Args, env: &mut ToolEnv) -> ToolOutput;
}

#[derive(Debug, Clone)]
pub struct CrashContext {
    pub group: CrashGroup,
    /// Workspace-relative minimized harness, once produced.
    pub minimized: Option<String>,
    pub observations: Vec<Observation>,
}

/// Per-invocation scratch state shared between the scheduler and the tools.
#[derive(Debug, Default)]
pub struct Session {
    pub build_attempts: usize,
    /// Harness ids compiled successfully during this invocation.
    pub compiled: Vec<String>,
    /// Campaign ids run during this invocation.
    pub campaigns: Vec<String>,
    pub crash: Option<CrashContext>,
    pub verdict: Option<TriageVerdict>,
    pub guidance_request: Option<GuidanceRequest>,
    pub guidance: Option<(HarnessGuidance, String)>,
}

pub struct FuzzSettings {
    pub adapter: Box<dyn FuzzerAdapter>,
    pub policy: PlateauPolicy,
}

/// Latest measured coverage, as seen by the analyzer tools.
#[derive(Debug, Clone)]
pub struct CoverageView {
    pub root: CoverageNode,
    pub catalog: ApiCatalog,
}

pub struct CoverageSettings {
    pub source: Box<dyn CoverageSource>,
    pub filter: CoverageFilter,
    /// Glob, relative to `src/`, of headers that declare the public API.
    pub include_glob: String,
    pub current: Option<CoverageView>,
}

pub struct ToolEnv {
    pub sandbox: Arc<Sandbox>,
    pub clock: Arc<dyn Clock>,
    pub build: BuildSettings,
    pub web: WebState,
    pub fuzz: FuzzSettings,
    pub coverage: CoverageSettings,
    pub debugger: Box<dyn Debugger>,
    pub session: Session,
}

impl ToolEnv {
    /// An environment with offline defaults: no web provider, an idle stub
    /// fuzzer, no coverage fixtures and no debugger.
    pub fn new(sandbox: Arc<Sandbox>, clock: Arc<dyn Clock>) -> Self {
        Self {
            sandbox,
            clock,
            build: BuildSettings::default(),
            web: WebState::new(Box::new(FixtureProvider::unavailable("no web provider configured"))),
            fuzz: FuzzSettings {
                adapter: Box::new(StubAdapter::from_trace(StubTrace::counts(&[0]))),
                policy: PlateauPolicy::default(),
            },
            coverage: CoverageSettings {
                source: Box::new(FixtureCoverage { dir: PathBuf::from("/nonexistent") }),
                filter: CoverageFilter::default(),
                include_glob: "**/*.h".into(),
                current: None,
            },
            debugger: Box::new(NoDebugger),
            session: Session::default(),
        }
    }

    pub fn root(&self) -> &std::path::Path {
        self.sandbox.root()
    }
}

/// All tools, keyed by name.
pub fn standard_tools() -> BTreeMap<&'static str, Box<dyn Tool>> {
    let tools: Vec<Box<dyn Tool>> = vec![
        Box::new(files::ViewFile),
        Box::new(files::WriteFile),
        Box::new(files::ApplyEdit),
        Box::new(files::SearchFiles),
        Box::new(command::RunCommand),
        Box::new(build::BuildLibrary),
        Box::new(build::CompileHarness),
        Box::new(web::SearchWeb),
        Box::new(web::FetchArtifact),
        Box::new(web::TrackProgress),
        Box::new(web::PruneDictionary),
        Box::new(fuzzing::RunFuzzer),
        Box::new(coverage_tools::CoverageReport),
        Box::new(coverage_tools::CoverageBlockers),
        Box::new(coverage_tools::SubmitGuidance),
        Box::new(crash_tools::InitialAnalysis),
        Box::new(crash_tools::ContextInspection),
        Box::new(crash_tools::MinimizeTool),
        Box::new(crash_tools::SubmitVerdict),
    ];
    tools.into_iter().map(|t| (t.spec().name, t)).collect()
}
