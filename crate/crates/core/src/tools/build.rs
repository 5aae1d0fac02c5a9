use std::fs;
use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::command::{command_env, run_argv};
use super::{p, Args, CommandOutcome, ErrorKind, Tool, ToolEnv, ToolFailure, ToolOutput, ToolSpec};
use crate::util::{glob_files, truncate_head, OUTPUT_CAP};

/// Symbol substrings that only appear in sanitizer- or coverage-instrumented code.
pub const INSTRUMENTATION_MARKERS: [&str; 5] = [
    "__asan_",
    "__sanitizer_cov",
    "__ubsan_",
    "__llvm_profile",
    "__msan_",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildSettings {
    pub cc: String,
    pub cxx: String,
    /// Flags handed to the build script through CFLAGS/CXXFLAGS.
    pub instrumentation_flags: Vec<String>,
    pub expected_artifacts: Vec<String>,
    /// Flags for compiling and linking a harness.
    pub harness_flags: Vec<String>,
    pub build_timeout: f64,
    pub compile_timeout: f64,
    /// build_library calls allowed per agent invocation.
    pub max_build_attempts: usize,
}

impl Default for BuildSettings {
    fn default() -> Self {
        Self {
            cc: "clang".into(),
            cxx: "clang++".into(),
            instrumentation_flags: vec![
                "-g".into(),
                "-O1".into(),
                "-fno-omit-frame-pointer".into(),
                "-fsanitize=address,fuzzer-no-link".into(),
            ],
            expected_artifacts: vec!["build/**/*.a".into()],
            harness_flags: vec!["-g".into(), "-O1".into(), "-fsanitize=address,fuzzer".into()],
            build_timeout: 600.0,
            compile_timeout: 300.0,
            max_build_attempts: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildRecipe {
    pub script_path: String,
    pub instrumentation_flags: Vec<String>,
    pub expected_artifacts: Vec<String>,
}

impl BuildRecipe {
    pub fn from_settings(settings: &BuildSettings) -> Self {
        Self {
            script_path: "src/build.sh".into(),
            instrumentation_flags: settings.instrumentation_flags.clone(),
            expected_artifacts: settings.expected_artifacts.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildOutcome {
    pub command: CommandOutcome,
    pub artifacts: Vec<String>,
    pub unmatched_globs: Vec<String>,
    /// Artifacts in which an instrumentation marker was found.
    pub instrumented: Vec<String>,
}

impl BuildOutcome {
    pub fn passed(&self) -> bool {
        self.command.success() && self.unmatched_globs.is_empty() && !self.instrumented.is_empty()
    }

    /// Why verification failed, or `None` when it passed.
    pub fn problem(&self) -> Option<String> {
        if !self.command.success() {
            let log = self.command.stdout_excerpt.clone() + &self.command.stderr_excerpt;
            return Some(format!(
                "build script failed ({}). Log tail:\n{}",
                if self.command.timed_out { "timed out".to_string() } else { format!("exit code {}", self.command.exit_code) },
                tail(&log, 16 * 1024)
            ));
        }
        if !self.unmatched_globs.is_empty() {
            return Some(format!(
                "build finished but expected artifacts are missing: {}",
                self.unmatched_globs.join(", ")
            ));
        }
        if self.instrumented.is_empty() {
            return Some(format!(
                "artifacts {} carry no sanitizer or coverage instrumentation; the script must compile with $CC and $CFLAGS",
                self.artifacts.join(", ")
            ));
        }
        None
    }
}

fn tail(text: &str, cap: usize) -> String {
    if text.len() <= cap {
        return text.to_string();
    }
    let mut start = text.len() - cap;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    let start = text[start..].find('\n').map(|i| start + i + 1).unwrap_or(start);
    format!("[... {start} earlier bytes omitted ...]\n{}", &text[start..])
}

/// True when the archive or object at `path` references instrumentation
/// symbols. Uses `nm` when available and falls back to scanning the bytes.
pub fn probe_instrumentation(path: &Path) -> bool {
    if let Ok(out) = Command::new("nm").arg("-A").arg(path).output() {
        if out.status.success() {
            let listing = String::from_utf8_lossy(&out.stdout);
            return INSTRUMENTATION_MARKERS.iter().any(|m| listing.contains(m));
        }
    }
    let Ok(bytes) = fs::read(path) else {
        return false;
    };
    INSTRUMENTATION_MARKERS
        .iter()
        .any(|m| bytes.windows(m.len()).any(|w| w == m.as_bytes()))
}

/// Runs `src/build.sh` with `flags` injected and the install prefix at
/// `prefix_rel` (workspace-relative).
pub(crate) fn run_build_script(
    root: &Path,
    flags: &[String],
    settings: &BuildSettings,
    prefix_rel: &str,
) -> Result<CommandOutcome, ToolFailure> {
    let flags = flags.join(" ");
    let mut env = command_env(root, settings);
    let prefix = root.join(prefix_rel).to_string_lossy().into_owned();
    env.extend([
        ("CFLAGS".to_string(), flags.clone()),
        ("CXXFLAGS".to_string(), flags),
        ("PREFIX".to_string(), prefix.clone()),
        ("OUT".to_string(), prefix.clone()),
        ("WORK".to_string(), prefix),
        ("SRC".to_string(), root.join("src").to_string_lossy().into_owned()),
    ]);
    let script_arg = root.join("src/build.sh").to_string_lossy().into_owned();
    run_argv(&["sh", &script_arg], &root.join("src"), &env, settings.build_timeout)
}

/// Runs the build script with instrumentation injected through the
/// environment, then checks the artifacts and the instrumentation probe.
pub fn build_library(root: &Path, recipe: &BuildRecipe, settings: &BuildSettings) -> Result<BuildOutcome, ToolFailure> {
    let script = root.join(&recipe.script_path);
    if !script.is_file() {
        return Err(ToolFailure::bad_args(format!(
            "{} does not exist; write the build script first",
            recipe.script_path
        )));
    }
    let command = run_build_script(root, &recipe.instrumentation_flags, settings, "build")?;
    let mut artifacts = Vec::new();
    let mut unmatched = Vec::new();
    for g in &recipe.expected_artifacts {
        let found: Vec<String> = glob_files(root, g)
            .into_iter()
            .filter(|f| !f.starts_with("build/cov/") && !f.starts_with("build/.home/") && !f.starts_with("build/.tmp/"))
            .collect();
        if found.is_empty() {
            unmatched.push(g.clone());
        }
        for f in found {
            if !artifacts.contains(&f) {
                artifacts.push(f);
            }
        }
    }
    let instrumented = artifacts
        .iter()
        .filter(|a| probe_instrumentation(&root.join(a)))
        .cloned()
        .collect();
    Ok(BuildOutcome {
        command,
        artifacts,
        unmatched_globs: unmatched,
        instrumented,
    })
}

/// Static libraries a harness links against.
pub(crate) fn link_archives(root: &Path) -> Vec<String> {
    glob_files(root, "build/**/*.a")
        .into_iter()
        .filter(|f| !f.starts_with("build/cov/"))
        .collect()
}

/// Compiles `harnesses/<id>.c` into `harnesses/<id>` against the built library.
/// Returns the binary's workspace-relative path, or the compiler diagnostics.
pub fn compile_harness(
    root: &Path,
    source_rel: &str,
    output_rel: &str,
    settings: &BuildSettings,
    extra_flags: &[String],
) -> Result<String, ToolFailure> {
    let archives = link_archives(root);
    if archives.is_empty() {
        return Err(ToolFailure::bad_args(
            "no library build artifacts under build/; the LibraryBuilder has to build the library first",
        ));
    }
    let mut argv: Vec<String> = vec![settings.cc.clone()];
    argv.extend(settings.harness_flags.iter().cloned());
    argv.extend(extra_flags.iter().cloned());
    for inc in ["build/include", "src/include", "src"] {
        if root.join(inc).is_dir() {
            argv.push(format!("-I{inc}"));
        }
    }
    argv.push(source_rel.to_string());
    argv.extend(archives);
    argv.push("-o".into());
    argv.push(output_rel.to_string());
    let argv_ref: Vec<&str> = argv.iter().map(String::as_str).collect();
    let env = command_env(root, settings);
    let out = run_argv(&argv_ref, root, &env, settings.compile_timeout)?;
    if out.success() && root.join(output_rel).is_file() {
        return Ok(output_rel.to_string());
    }
    let _ = fs::remove_file(root.join(output_rel));
    let diag = out.stderr_excerpt + &out.stdout_excerpt;
    let kind = if out.timed_out { ErrorKind::Timeout } else { ErrorKind::NonzeroExit };
    Err(ToolFailure::new(
        kind,
        format!("compilation of {source_rel} failed:\n{}", truncate_head(&diag, OUTPUT_CAP - 256)),
    ))
}

pub(crate) struct BuildLibrary;
pub(crate) struct CompileHarness;

impl Tool for BuildLibrary {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "build_library",
            description: "Run src/build.sh with CC, CFLAGS and PREFIX set, then verify artifacts under build/ and their instrumentation.",
            params: vec![],
        }
    }

    fn call(&self, _args: &Args, env: &mut ToolEnv) -> ToolOutput {
        env.session.build_attempts += 1;
        if env.session.build_attempts > env.build.max_build_attempts {
            return Err(ToolFailure::bad_args(format!(
                "build attempt limit ({}) reached for this invocation",
                env.build.max_build_attempts
            )));
        }
        let recipe = BuildRecipe::from_settings(&env.build);
        let outcome = build_library(env.root(), &recipe, &env.build)?;
        match outcome.problem() {
            None => Ok(format!(
                "build verified (attempt {}): artifacts {}; instrumented {}",
                env.session.build_attempts,
                outcome.artifacts.join(", "),
                outcome.instrumented.join(", ")
            )),
            Some(problem) => Err(ToolFailure::new(ErrorKind::NonzeroExit, problem)),
        }
    }
}

/// Harness id from a workspace path like `harnesses/h1.c`.
pub(crate) fn harness_id(source: &str) -> Option<&str> {
    let name = source.strip_prefix("harnesses/")?.strip_suffix(".c")?;
    (!name.is_empty() && !name.contains('/') && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'))
        .then_some(name)
}

impl Tool for CompileHarness {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "compile_harness",
            description: "Compile harnesses/<id>.c against the instrumented library into harnesses/<id>.",
            params: vec![
                p("path", "harness source, e.g. harnesses/h1.c", true),
                p("extra_flags", "additional compiler flags, space separated", false),
            ],
        }
    }

    fn call(&self, args: &Args, env: &mut ToolEnv) -> ToolOutput {
        let path = args.req("path")?;
        let abs = env.sandbox.resolve(path)?;
        let rel = env.sandbox.relative(&abs);
        let id = harness_id(&rel)
            .ok_or_else(|| ToolFailure::bad_args(format!("harness sources live at harnesses/<id>.c, got {rel}")))?
            .to_string();
        if !abs.is_file() {
            return Err(ToolFailure::bad_args(format!("no such file: {rel}")));
        }
        let extra: Vec<String> = args.opt("extra_flags").unwrap_or("").split_whitespace().map(String::from).collect();
        let bin = compile_harness(env.root(), &rel, &format!("harnesses/{id}"), &env.build, &extra)?;
        if !env.session.compiled.contains(&id) {
            env.session.compiled.push(id);
        }
        Ok(format!("compiled {rel} -> {bin}"))
    }
}
