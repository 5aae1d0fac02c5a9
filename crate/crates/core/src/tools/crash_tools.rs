use std::fs;
use std::path::Path;

use super::build::compile_harness;
use super::command::{command_env, run_argv};
use super::{p, Args, BuildSettings, CrashContext, ErrorKind, Tool, ToolEnv, ToolFailure, ToolOutput, ToolSpec};
use crate::triage::{
    classify_crash, debug_probe, minimize_harness, parse_crash_report, SignalKind, AgentJudgment, Evidence, EvidenceKind, MinimizeError,
    ProbeCommand, TriageVerdict, Verdict,
};

/// Source lines shown around each in-project frame.
pub const CONTEXT_LINES: u32 = 5;
/// Runs per reproduce check; a crash in any run counts.
pub const REPRODUCE_RUNS: usize = 3;
const REPRODUCE_TIMEOUT: f64 = 30.0;

fn crash(env: &ToolEnv) -> Result<&CrashContext, ToolFailure> {
    env.session
        .crash
        .as_ref()
        .ok_or_else(|| ToolFailure::bad_args("no crash is under analysis in this session"))
}

fn snippet(root: &Path, file: &str, line: u32) -> Option<String> {
    let text = fs::read_to_string(root.join(file)).ok()?;
    let lo = line.saturating_sub(CONTEXT_LINES).max(1);
    let hi = line + CONTEXT_LINES;
    let mut s = String::new();
    for (i, l) in text.lines().enumerate() {
        let n = i as u32 + 1;
        if (lo..=hi).contains(&n) {
            let mark = if n == line { ">" } else { " " };
            s.push_str(&format!("{mark}{n:>5}| {l}\n"));
        }
    }
    Some(s)
}

/// True when sanitizer or runtime-error output shows a crash.
pub fn looks_like_crash(exit_code: i32, output: &str) -> bool {
    exit_code != 0
        && ["ERROR: AddressSanitizer", "ERROR: UndefinedBehaviorSanitizer", "runtime error:", "ERROR: libFuzzer", "SUMMARY: "]
            .iter()
            .any(|m| output.contains(m))
}

/// Compiles `source` under `work_rel` and runs it on `input_rel` up to
/// [`REPRODUCE_RUNS`] times. Leak reports are switched off, and unless
/// `expected` is `Other` the crash must be of the same kind.
pub fn reproduces(
    root: &Path,
    settings: &BuildSettings,
    work_rel: &str,
    source: &str,
    input_rel: &str,
    expected: SignalKind,
) -> bool {
    let src_rel = format!("{work_rel}/candidate.c");
    let bin_rel = format!("{work_rel}/candidate");
    if fs::create_dir_all(root.join(work_rel)).is_err() || fs::write(root.join(&src_rel), source).is_err() {
        return false;
    }
    if compile_harness(root, &src_rel, &bin_rel, settings, &[]).is_err() {
        return false;
    }
    let mut env = command_env(root, settings);
    env.push(("ASAN_OPTIONS".into(), "detect_leaks=0".into()));
    (0..REPRODUCE_RUNS).any(|_| {
        run_argv(&[&bin_rel, input_rel], root, &env, REPRODUCE_TIMEOUT)
            .map(|o| {
                let out = o.stderr_excerpt + &o.stdout_excerpt;
                looks_like_crash(o.exit_code, &out)
                    && (expected == SignalKind::Other || parse_crash_report(&out, "").signal_kind == expected)
            })
            .unwrap_or(false)
    })
}

pub(crate) struct InitialAnalysis;
pub(crate) struct ContextInspection;
pub(crate) struct MinimizeTool;
pub(crate) struct SubmitVerdict;

impl Tool for InitialAnalysis {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "crash_initial_analysis",
            description: "Crash kind, stack and the source around each project frame for the crash under analysis.",
            params: vec![],
        }
    }

    fn call(&self, _args: &Args, env: &mut ToolEnv) -> ToolOutput {
        let ctx = crash(env)?;
        let rep = ctx.group.representative();
        let mut s = format!(
            "crash group {} ({} member{}), harness harnesses/{}.c\nkind: {}\ninput: {}\n",
            ctx.group.short_key(),
            ctx.group.members.len(),
            if ctx.group.members.len() == 1 { "" } else { "s" },
            rep.harness_id,
            rep.signal_kind.label(),
            rep.input_file
        );
        if let Some(line) = rep.raw_report.lines().find(|l| l.contains("ERROR:")) {
            s.push_str(&format!("report: {}\n", line.trim()));
        }
        s.push_str("stack:\n");
        if rep.frames.is_empty() {
            s.push_str("  (no frames could be parsed)\n");
        }
        for (i, f) in rep.frames.iter().enumerate() {
            let loc = match f.line {
                Some(l) => format!("{}:{l}", f.file),
                None => f.file.clone(),
            };
            s.push_str(&format!("  #{i} {} {loc}{}\n", f.function, if f.in_project { "" } else { " [external]" }));
        }
        for f in rep.frames.iter().filter(|f| f.in_project).take(3) {
            if let Some(line) = f.line {
                if let Some(snip) = snippet(env.root(), &f.file, line) {
                    s.push_str(&format!("\n{} ({}:{line}):\n{snip}", f.function, f.file));
                }
            }
        }
        Ok(s)
    }
}

impl Tool for ContextInspection {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "crash_context_inspection",
            description: "Run a batch debugger probe on the crashing input. One command per line: break <frame|function>, print-local <name>, print-arg <name>, backtrace.",
            params: vec![p("script", "probe commands, one per line", true)],
        }
    }

    fn call(&self, args: &Args, env: &mut ToolEnv) -> ToolOutput {
        let script = ProbeCommand::parse_script(args.req("script")?).map_err(ToolFailure::bad_args)?;
        let ctx = crash(env)?;
        let rep = ctx.group.representative();
        let binary = env.root().join(format!("harnesses/{}", rep.harness_id));
        let input = env.root().join(&rep.input_file);
        let outcome = debug_probe(env.debugger.as_ref(), &binary, &input, &script);
        if !outcome.debugger_available {
            return Err(ToolFailure::new(
                ErrorKind::ProviderUnavailable,
                "no debugger is available; decide from static evidence",
            ));
        }
        let mut s = String::new();
        for o in &outcome.observations {
            s.push_str(&format!("[{}] {} => {}\n", if o.ok { "ok" } else { "error" }, o.command, o.text));
        }
        if s.is_empty() {
            s.push_str("empty probe script, nothing observed\n");
        }
        if let Some(ctx) = env.session.crash.as_mut() {
            ctx.observations.extend(outcome.observations);
        }
        Ok(s)
    }
}

impl Tool for MinimizeTool {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "minimize_harness",
            description: "Greedily drop statements from the crashing harness while the crash still reproduces.",
            params: vec![],
        }
    }

    fn call(&self, _args: &Args, env: &mut ToolEnv) -> ToolOutput {
        let ctx = crash(env)?;
        let rep = ctx.group.representative();
        let harness = format!("harnesses/{}.c", rep.harness_id);
        let work = format!("crashes/{}", ctx.group.short_key());
        let input = rep.input_file.clone();
        let kind = rep.signal_kind;
        let root = env.root().to_path_buf();
        let source = fs::read_to_string(root.join(&harness))
            .map_err(|e| ToolFailure::bad_args(format!("reading {harness}: {e}")))?;
        let settings = env.build.clone();
        let mut check = |candidate: &str| reproduces(&root, &settings, &work, candidate, &input, kind);
        let min = match minimize_harness(&source, &mut check) {
            Ok(m) => m,
            Err(MinimizeError::NotReproducible) => {
                return Err(ToolFailure::new(
                    ErrorKind::NonzeroExit,
                    format!("{harness} does not reproduce the crash on {input} in {REPRODUCE_RUNS} runs; the crash should be requeued as Inconclusive"),
                ))
            }
            Err(e) => return Err(ToolFailure::bad_args(e.to_string())),
        };
        let dest = format!("{work}/harness.min.c");
        fs::write(root.join(&dest), &min.source).map_err(|e| ToolFailure::new(ErrorKind::NonzeroExit, e.to_string()))?;
        for f in ["candidate.c", "candidate"] {
            let _ = fs::remove_file(root.join(&work).join(f));
        }
        if let Some(ctx) = env.session.crash.as_mut() {
            ctx.minimized = Some(dest.clone());
        }
        Ok(format!(
            "minimized {harness}: removed {} of {} statements -> {dest}\n\n{}",
            min.removed,
            min.kept.len(),
            min.source
        ))
    }
}

fn parse_evidence(line: &str) -> Result<Evidence, String> {
    let mut parts = line.splitn(3, '|').map(str::trim);
    let kind = parts.next().unwrap_or("");
    let kind = EvidenceKind::parse(kind).ok_or_else(|| {
        format!("unknown evidence kind `{kind}` (use source, debugger, doc or precondition)")
    })?;
    let reference = parts.next().unwrap_or("").to_string();
    let detail = parts.next().unwrap_or("").to_string();
    if reference.is_empty() {
        return Err(format!("evidence `{line}` needs kind|reference|detail"));
    }
    Ok(Evidence { kind, reference, detail })
}

impl Tool for SubmitVerdict {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "submit_verdict",
            description: "Classify the crash as LibraryBug, HarnessError or Inconclusive. Evidence lines are kind|reference|detail with kind one of source (reference src/file:line), debugger (reference = probe command), doc, precondition (reference = API name).",
            params: vec![
                p("verdict", "LibraryBug, HarnessError or Inconclusive", true),
                p("evidence", "one item per line", false),
                p("rationale", "root-cause explanation", true),
            ],
        }
    }

    fn call(&self, args: &Args, env: &mut ToolEnv) -> ToolOutput {
        let raw = args.req("verdict")?;
        let verdict = Verdict::parse(raw).ok_or_else(|| ToolFailure::bad_args(format!("unknown verdict `{raw}`")))?;
        let evidence = args
            .lines("evidence")
            .iter()
            .map(|l| parse_evidence(l))
            .collect::<Result<Vec<_>, _>>()
            .map_err(ToolFailure::bad_args)?;
        let ctx = crash(env)?;
        for e in evidence.iter().filter(|e| e.kind == EvidenceKind::DebuggerObservation) {
            let seen = ctx
                .observations
                .iter()
                .any(|o| o.ok && o.command == e.reference && (e.detail.is_empty() || o.text.contains(&e.detail)));
            if !seen {
                return Err(ToolFailure::bad_args(format!(
                    "debugger evidence `{}` does not match any successful probe in this session",
                    e.reference
                )));
            }
        }
        let judgment = AgentJudgment {
            verdict,
            evidence,
            rationale: args.req("rationale")?.trim().to_string(),
        };
        let result: TriageVerdict = classify_crash(&ctx.group, &judgment);
        let rel = format!("reports/verdicts/{}.json", ctx.group.short_key());
        let dest = env.root().join(&rel);
        fs::create_dir_all(dest.parent().expect("has parent")).map_err(|e| ToolFailure::new(ErrorKind::NonzeroExit, e.to_string()))?;
        let text = serde_json::to_string_pretty(&result).expect("verdict serializes");
        fs::write(&dest, text + "\n").map_err(|e| ToolFailure::new(ErrorKind::NonzeroExit, e.to_string()))?;
        let note = match result.downgraded_from {
            Some(from) => format!(" (downgraded from {from:?}: evidence does not support it)"),
            None => String::new(),
        };
        let msg = format!("recorded {:?} -> {:?}{note}; {rel}", result.verdict, result.recommended_action);
        env.session.verdict = Some(result);
        Ok(msg)
    }
}
