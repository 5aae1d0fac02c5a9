use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::build::run_build_script;
use super::command::{command_env, run_argv};
use super::{p, Args, BuildSettings, CoverageView, ErrorKind, Tool, ToolEnv, ToolFailure, ToolOutput, ToolSpec};
use crate::coverage::headers::scan_public_api;
use crate::coverage::{
    build_tree, llvm, render_context, top_blockers, ApiCatalog, CoverageError, CoverageExport, Level,
    MIN_RENDER_BUDGET,
};
use crate::evolution::{Constraint, GuidanceDraft};
use crate::util::glob_files;

/// Produces a coverage export for the workspace after a campaign.
pub trait CoverageSource: Send {
    fn measure(&self, root: &Path, campaign_id: &str, harness_id: &str) -> Result<CoverageExport, CoverageError>;
}

/// Replays checked-in exports: `<dir>/<campaign>.cov.json`, else the latest
/// export whose campaign id sorts before it.
#[derive(Debug, Clone)]
pub struct FixtureCoverage {
    pub dir: PathBuf,
}

impl CoverageSource for FixtureCoverage {
    fn measure(&self, _root: &Path, campaign_id: &str, _harness_id: &str) -> Result<CoverageExport, CoverageError> {
        let exact = self.dir.join(format!("{campaign_id}.cov.json"));
        if exact.is_file() {
            return CoverageExport::load(&exact);
        }
        let mut candidates: Vec<String> = fs::read_dir(&self.dir)
            .map_err(|e| CoverageError::Io {
                path: self.dir.display().to_string(),
                source: e,
            })?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str().map(String::from))
            .filter_map(|n| n.strip_suffix(".cov.json").map(String::from))
            .filter(|id| id.as_str() <= campaign_id)
            .collect();
        candidates.sort();
        match candidates.last() {
            Some(id) => CoverageExport::load(&self.dir.join(format!("{id}.cov.json"))),
            None => Err(CoverageError::Schema {
                locus: self.dir.display().to_string(),
                reason: format!("no coverage export at or before campaign {campaign_id}"),
            }),
        }
    }
}

/// Source-based coverage through clang's profile instrumentation: builds the
/// library a second time under `build/cov`, replays the corpus through a
/// profiling build of the harness and converts the `llvm-cov` export.
pub struct LlvmCoverage {
    pub build: BuildSettings,
    /// Glob, relative to `src/`, of headers declaring the public API.
    pub api_headers: String,
    pub timeout: f64,
}

const PROFILE_FLAGS: [&str; 3] = ["-g", "-fprofile-instr-generate", "-fcoverage-mapping"];

impl LlvmCoverage {
    fn step(&self, what: &str, out: super::CommandOutcome) -> Result<(), CoverageError> {
        if out.success() {
            return Ok(());
        }
        Err(CoverageError::Schema {
            locus: what.to_string(),
            reason: format!(
                "exit {}: {}",
                out.exit_code,
                out.stderr_excerpt.lines().last().unwrap_or("")
            ),
        })
    }

    fn fail(what: &str, e: ToolFailure) -> CoverageError {
        CoverageError::Schema {
            locus: what.to_string(),
            reason: e.message,
        }
    }
}

impl CoverageSource for LlvmCoverage {
    fn measure(&self, root: &Path, campaign_id: &str, harness_id: &str) -> Result<CoverageExport, CoverageError> {
        if !llvm::tools_available() {
            return Err(CoverageError::Schema {
                locus: "llvm-cov".into(),
                reason: "llvm-cov and llvm-profdata are not installed".into(),
            });
        }
        let flags: Vec<String> = PROFILE_FLAGS.iter().map(|s| s.to_string()).collect();
        if glob_files(root, "build/cov/**/*.a").is_empty() {
            let out = run_build_script(root, &flags, &self.build, "build/cov").map_err(|e| Self::fail("coverage build", e))?;
            self.step("coverage build", out)?;
        }
        let bin_dir = root.join("coverage/bin");
        fs::create_dir_all(&bin_dir).map_err(|e| CoverageError::Io {
            path: "coverage/bin".into(),
            source: e,
        })?;
        let bin = format!("coverage/bin/{harness_id}");
        let mut argv: Vec<String> = vec![self.build.cc.clone(), "-fsanitize=fuzzer".into()];
        argv.extend(flags);
        for inc in ["build/include", "src/include", "src"] {
            if root.join(inc).is_dir() {
                argv.push(format!("-I{inc}"));
            }
        }
        argv.push(format!("harnesses/{harness_id}.c"));
        argv.extend(glob_files(root, "build/cov/**/*.a"));
        argv.extend(["-o".to_string(), bin.clone()]);
        let env = command_env(root, &self.build);
        let refs: Vec<&str> = argv.iter().map(String::as_str).collect();
        let out = run_argv(&refs, root, &env, self.build.compile_timeout).map_err(|e| Self::fail("coverage compile", e))?;
        self.step("coverage compile", out)?;

        let raw = root.join(format!("coverage/{campaign_id}.profraw"));
        let mut env = env;
        env.push(("LLVM_PROFILE_FILE".into(), raw.to_string_lossy().into_owned()));
        let out = run_argv(&[&bin, "-runs=0", "corpus"], root, &env, self.timeout).map_err(|e| Self::fail("corpus replay", e))?;
        self.step("corpus replay", out)?;

        let json = llvm::export_profiles(&[raw], &root.join(&bin), &root.join("coverage"))?;
        let public: BTreeSet<String> = scan_public_api(&root.join("src"), &self.api_headers).into_iter().map(|(n, _)| n).collect();
        llvm::convert(&json, &root.join("src"), &public)
    }
}

/// Measures coverage after `campaign_id` and installs it as the current view.
/// Declared-but-unreached APIs from the public headers join the catalog as uncovered.
pub fn refresh_coverage(env: &mut ToolEnv, campaign_id: &str, harness_id: &str) -> Result<(), CoverageError> {
    let root = env.root().to_path_buf();
    let export = env.coverage.source.measure(&root, campaign_id, harness_id)?;
    let tree = build_tree(&export, &env.coverage.filter);
    let declared = scan_public_api(&root.join("src"), &env.coverage.include_glob);
    let catalog = ApiCatalog::from_export(&export, &env.coverage.filter).with_declared(
        declared
            .into_iter()
            .filter(|(_, file)| !env.coverage.filter.excludes(file)),
    );
    let dest = root.join(format!("coverage/{campaign_id}.json"));
    let _ = fs::write(dest, export.to_json());
    env.coverage.current = Some(CoverageView { root: tree, catalog });
    Ok(())
}

fn current(env: &ToolEnv) -> Result<&CoverageView, ToolFailure> {
    env.coverage
        .current
        .as_ref()
        .ok_or_else(|| ToolFailure::bad_args("no coverage has been measured yet"))
}

pub(crate) struct CoverageReport;
pub(crate) struct CoverageBlockers;
pub(crate) struct SubmitGuidance;

impl Tool for CoverageReport {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "coverage_report",
            description: "Coverage table at one level (project, module, file, api, function, branch), most uncovered first.",
            params: vec![
                p("level", "hierarchy level, default file", false),
                p("budget", "character budget, default 4000", false),
            ],
        }
    }

    fn call(&self, args: &Args, env: &mut ToolEnv) -> ToolOutput {
        let level = match args.opt("level") {
            None => Level::File,
            Some(l) => Level::parse(l).ok_or_else(|| ToolFailure::bad_args(format!("unknown level `{l}`")))?,
        };
        let budget: usize = args.opt_num("budget")?.unwrap_or(4000).max(MIN_RENDER_BUDGET);
        let view = current(env)?;
        let ratio = crate::coverage::api_coverage_ratio(&view.catalog)
            .map(|r| format!("API coverage {:.1}%\n", r * 100.0))
            .unwrap_or_default();
        Ok(ratio + &render_context(&view.root, level, budget))
    }
}

impl Tool for CoverageBlockers {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "coverage_blockers",
            description: "Functions and branches with the highest blocked complexity, with their enclosing chain.",
            params: vec![p("k", "how many, default 5", false)],
        }
    }

    fn call(&self, args: &Args, env: &mut ToolEnv) -> ToolOutput {
        let k: usize = args.opt_num("k")?.unwrap_or(5);
        let view = current(env)?;
        let blockers = top_blockers(&view.root, k);
        if blockers.is_empty() {
            return Ok("no blockers: every measured branch is covered".into());
        }
        let mut s = String::new();
        for (i, b) in blockers.iter().enumerate() {
            s.push_str(&format!(
                "{}. {} {} in {}: blocked {} ({} / {} covered)\n   via {}\n",
                i + 1,
                b.level.label(),
                b.name,
                b.file,
                b.blocked_complexity,
                b.covered,
                b.total,
                b.trace.join(" > ")
            ));
        }
        Ok(s)
    }
}

impl Tool for SubmitGuidance {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "submit_guidance",
            description: "Submit the harness guidance for this analysis; it is checked against the coverage data.",
            params: vec![
                p("target_apis", "ordered call sequence, comma separated", true),
                p("helper_apis", "init/cleanup/validation helpers, comma separated", false),
                p("constraints", "one per line, `param: ...` or `pre: ...`", false),
                p("rationale", "why this sequence", false),
            ],
        }
    }

    fn call(&self, args: &Args, env: &mut ToolEnv) -> ToolOutput {
        let request = env
            .session
            .guidance_request
            .as_ref()
            .ok_or_else(|| ToolFailure::bad_args("no guidance was requested in this session"))?;
        let constraints = args
            .lines("constraints")
            .iter()
            .map(|l| Constraint::parse(l))
            .collect::<Result<Vec<_>, _>>()
            .map_err(ToolFailure::bad_args)?;
        let draft = GuidanceDraft {
            target_apis: args.list("target_apis"),
            helper_apis: args.list("helper_apis"),
            rationale: args.opt("rationale").unwrap_or("").trim().to_string(),
            constraints,
        };
        let guidance = request
            .validate(&draft)
            .map_err(|r| ToolFailure::bad_args(format!("guidance rejected: {r}")))?;
        let root = env.root().to_path_buf();
        let dir = root.join("reports/guidance");
        fs::create_dir_all(&dir).map_err(|e| ToolFailure::new(ErrorKind::NonzeroExit, e.to_string()))?;
        let n = glob_files(&root, "reports/guidance/g*.json").len() + 1;
        let rel = format!("reports/guidance/g{n:03}.json");
        let text = serde_json::to_string_pretty(&guidance).expect("guidance serializes");
        fs::write(root.join(&rel), text + "\n").map_err(|e| ToolFailure::new(ErrorKind::NonzeroExit, e.to_string()))?;
        let summary = format!("accepted {:?} guidance, expected gain {} -> {rel}", guidance.kind, guidance.expected_gain);
        env.session.guidance = Some((guidance, rel));
        Ok(summary)
    }
}
