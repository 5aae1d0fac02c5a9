//! Run configuration: one TOML file capturing every knob. Relative paths are
//! resolved against the directory holding the file.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{HttpBackend, ModelBackend, ScriptedBackend};
use crate::clock::{Clock, VirtualClock, WallClock};
use crate::coverage::CoverageFilter;
use crate::evolution::{Evolution, EvolutionBudget, DEFAULT_STRATEGY_THRESHOLD, MAX_HARNESS_FIX_ROUNDS};
use crate::fuzz::{FuzzerAdapter, LibFuzzerAdapter, PlateauPolicy, StubAdapter};
use crate::tools::{
    BuildSettings, CoverageSettings, CoverageSource, FixtureCoverage, FixtureProvider, FuzzSettings, LiveProvider,
    LlvmCoverage, Session, ToolEnv, WebProvider, WebState,
};
use crate::triage::{Debugger, GdbDebugger, NoDebugger, StubDebugger};
use crate::workspace::{init_workspace, Workspace};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config file {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error("config: {what} {path} does not exist")]
    MissingPath { what: &'static str, path: PathBuf },
    #[error(transparent)]
    Workspace(#[from] crate::workspace::WorkspaceError),
    #[error("{0}")]
    Backend(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    /// Scripted replay: a directory of per-role scripts or one shared script.
    Mock { script: PathBuf },
    Http {
        endpoint: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        #[serde(default = "default_http_timeout")]
        timeout_s: u64,
        #[serde(default)]
        temperature: f64,
    },
}

fn default_http_timeout() -> u64 {
    300
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockKind {
    Wall,
    Virtual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FuzzerConfig {
    /// Replays traces and crash fixtures from a directory.
    Stub { traces: PathBuf },
    LibFuzzer {
        #[serde(default)]
        args: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "lowercase", deny_unknown_fields)]
pub enum WebConfig {
    Fixture { catalog: PathBuf },
    Live {
        url: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token_env: Option<String>,
    },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum CoverageSourceConfig {
    Fixture { dir: PathBuf },
    Llvm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    #[serde(flatten)]
    pub source: CoverageSourceConfig,
    /// Globs (relative to src/) of files left out of coverage.
    #[serde(default)]
    pub exclude: Vec<String>,
    /// Glob (relative to src/) of public headers.
    #[serde(default = "default_api_headers")]
    pub api_headers: String,
}

fn default_api_headers() -> String {
    "**/*.h".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DebuggerConfig {
    Stub { fixture: PathBuf },
    Gdb {
        #[serde(default = "default_gdb")]
        program: String,
    },
    None,
}

fn default_gdb() -> String {
    "gdb".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub wall_clock: f64,
    pub per_campaign: f64,
    pub tick: f64,
    pub window: f64,
    pub threshold: f64,
    pub max_harness_fix_rounds: u32,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        let p = PlateauPolicy::default();
        Self {
            wall_clock: 24.0 * 3600.0,
            per_campaign: p.budget,
            tick: p.tick,
            window: p.window,
            threshold: p.threshold,
            max_harness_fix_rounds: MAX_HARNESS_FIX_ROUNDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub workspace: PathBuf,
    pub target: PathBuf,
    pub backend: BackendConfig,
    pub fuzzer: FuzzerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock: Option<ClockKind>,
    pub web: WebConfig,
    pub coverage: CoverageConfig,
    pub debugger: DebuggerConfig,
    #[serde(default)]
    pub budget: BudgetConfig,
    #[serde(default = "default_strategy_threshold")]
    pub strategy_threshold: f64,
    #[serde(default)]
    pub build: BuildSettings,
    /// Directory relative paths resolve against; set on load.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_strategy_threshold() -> f64 {
    DEFAULT_STRATEGY_THRESHOLD
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut c: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        c.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            source: e,
        })?;
        let c = Self::parse(&text, path)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn workspace_root(&self) -> PathBuf {
        self.resolve(&self.workspace)
    }

    pub fn policy(&self) -> PlateauPolicy {
        PlateauPolicy {
            threshold: self.budget.threshold,
            window: self.budget.window,
            tick: self.budget.tick,
            budget: self.budget.per_campaign,
        }
    }

    pub fn evolution_budget(&self) -> EvolutionBudget {
        EvolutionBudget {
            wall_clock: self.budget.wall_clock,
            per_campaign: self.budget.per_campaign,
            max_harness_fix_rounds: self.budget.max_harness_fix_rounds,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let b = &self.budget;
        if !(b.threshold > 0.0 && b.threshold < 1.0) {
            return Err(ConfigError::Invalid(format!("budget.threshold {} must lie in (0,1)", b.threshold)));
        }
        if !(self.strategy_threshold > 0.0 && self.strategy_threshold <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "strategy_threshold {} must lie in (0,1]",
                self.strategy_threshold
            )));
        }
        self.policy().check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.evolution_budget().check().map_err(ConfigError::Invalid)?;
        let must_exist = |what: &'static str, p: &Path| {
            let abs = self.resolve(p);
            if abs.exists() {
                Ok(())
            } else {
                Err(ConfigError::MissingPath { what, path: abs })
            }
        };
        must_exist("target source", &self.target)?;
        if let BackendConfig::Mock { script } = &self.backend {
            must_exist("mock script", script)?;
        }
        if let FuzzerConfig::Stub { traces } = &self.fuzzer {
            must_exist("stub trace directory", traces)?;
        }
        if let WebConfig::Fixture { catalog } = &self.web {
            must_exist("web catalog", catalog)?;
        }
        if let CoverageSourceConfig::Fixture { dir } = &self.coverage.source {
            must_exist("coverage fixture directory", dir)?;
        }
        if let DebuggerConfig::Stub { fixture } = &self.debugger {
            must_exist("debugger fixture", fixture)?;
        }
        let ws = self.workspace_root();
        let creatable = ws.ancestors().skip(1).find(|a| a.exists()).is_some_and(|a| a.is_dir());
        if !ws.exists() && !creatable {
            return Err(ConfigError::Invalid(format!("workspace {} cannot be created", ws.display())));
        }
        Ok(())
    }

    fn clock_kind(&self) -> ClockKind {
        self.clock.unwrap_or(match self.fuzzer {
            FuzzerConfig::Stub { .. } => ClockKind::Virtual,
            FuzzerConfig::LibFuzzer { .. } => ClockKind::Wall,
        })
    }

    pub fn make_clock(&self) -> Arc<dyn Clock> {
        match self.clock_kind() {
            ClockKind::Wall => Arc::new(WallClock::new()),
            ClockKind::Virtual => Arc::new(VirtualClock::new()),
        }
    }

    pub fn make_backend(&self) -> Result<Box<dyn ModelBackend>, ConfigError> {
        Ok(match &self.backend {
            BackendConfig::Mock { script } => Box::new(
                ScriptedBackend::load(&self.resolve(script)).map_err(|e| ConfigError::Backend(e.to_string()))?,
            ),
            BackendConfig::Http {
                endpoint,
                model,
                api_key_env,
                timeout_s,
                temperature,
            } => Box::new(HttpBackend {
                endpoint: endpoint.clone(),
                model: model.clone(),
                api_key_env: api_key_env.clone(),
                timeout_s: *timeout_s,
                temperature: *temperature,
            }),
        })
    }

    pub fn make_adapter(&self) -> Box<dyn FuzzerAdapter> {
        match &self.fuzzer {
            FuzzerConfig::Stub { traces } => Box::new(StubAdapter::from_dir(self.resolve(traces))),
            FuzzerConfig::LibFuzzer { args } => Box::new(LibFuzzerAdapter::new(args.clone())),
        }
    }

    pub fn make_web(&self) -> Box<dyn WebProvider> {
        match &self.web {
            WebConfig::Fixture { catalog } => Box::new(FixtureProvider::load(&self.resolve(catalog))),
            WebConfig::Live { url, token_env } => Box::new(LiveProvider {
                catalog_url: url.clone(),
                token_env: token_env.clone(),
                timeout_s: 60,
            }),
            WebConfig::None => Box::new(FixtureProvider::unavailable("web access is disabled in the configuration")),
        }
    }

    pub fn make_coverage_source(&self) -> Box<dyn CoverageSource> {
        match &self.coverage.source {
            CoverageSourceConfig::Fixture { dir } => Box::new(FixtureCoverage { dir: self.resolve(dir) }),
            CoverageSourceConfig::Llvm => Box::new(LlvmCoverage {
                build: self.build.clone(),
                api_headers: self.coverage.api_headers.clone(),
                timeout: self.budget.per_campaign.max(60.0),
            }),
        }
    }

    pub fn make_debugger(&self) -> Result<Box<dyn Debugger>, ConfigError> {
        Ok(match &self.debugger {
            DebuggerConfig::Stub { fixture } => {
                let path = self.resolve(fixture);
                Box::new(StubDebugger::load(&path).map_err(|e| ConfigError::Read { path, source: e })?)
            }
            DebuggerConfig::Gdb { program } => Box::new(GdbDebugger {
                program: program.clone(),
                timeout: Duration::from_secs(60),
            }),
            DebuggerConfig::None => Box::new(NoDebugger),
        })
    }

    /// Opens the workspace, creating it from the target source when it does
    /// not exist yet or is empty.
    pub fn open_workspace(&self) -> Result<Workspace, ConfigError> {
        let root = self.workspace_root();
        let fresh = !root.exists() || fs::read_dir(&root).map(|mut d| d.next().is_none()).unwrap_or(false);
        if fresh {
            Ok(init_workspace(&self.resolve(&self.target), &root)?)
        } else {
            Ok(Workspace::open(&root)?)
        }
    }

    pub fn tool_env(&self, ws: &Workspace) -> Result<ToolEnv, ConfigError> {
        let filter = CoverageFilter::new(&self.coverage.exclude).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(ToolEnv {
            sandbox: ws.sandbox.clone(),
            clock: self.make_clock(),
            build: self.build.clone(),
            web: WebState::new(self.make_web()),
            fuzz: FuzzSettings {
                adapter: self.make_adapter(),
                policy: self.policy(),
            },
            coverage: CoverageSettings {
                source: self.make_coverage_source(),
                filter,
                include_glob: self.coverage.api_headers.clone(),
                current: None,
            },
            debugger: self.make_debugger()?,
            session: Session::default(),
        })
    }

    /// Workspace, tools and backend wired together for `run_end_to_end`.
    pub fn assemble(&self) -> Result<Evolution, ConfigError> {
        let ws = self.open_workspace()?;
        let env = self.tool_env(&ws)?;
        let mut evo = Evolution::new(ws, env, self.make_backend()?);
        evo.budget = self.evolution_budget();
        evo.strategy_threshold = self.strategy_threshold;
        Ok(evo)
    }
}
