use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use evofuzz::agent::{
    parse_script, run_agent_loop, select_next_agent, AgentOutcome, AgentRole, AgentStatus, Author, BackendError,
    ChatRequest, FeedbackSignals, ModelBackend, Reply, ScriptLine, ScriptedBackend, ToolRegistry, TRANSPORT_RETRIES,
};
use evofuzz::clock::{Clock, VirtualClock};
use evofuzz::tools::{ErrorKind, ToolEnv};
use evofuzz::workspace::{init_workspace, ArtifactKind, Phase, Workspace, WorkspaceState};
use evofuzz::Role;
use proptest::prelude::*;

fn workspace(tmp: &Path) -> Workspace {
    let src = tmp.join("lib");
    fs::create_dir_all(&src).unwrap();
    fs::write(src.join("lib.c"), "int x;\n").unwrap();
    init_workspace(&src, &tmp.join("ws")).unwrap()
}

fn call(tool: &str, args: &[(&str, &str)]) -> ScriptLine {
    ScriptLine::Call {
        tool: tool.into(),
        args: args.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
    }
}

fn done() -> ScriptLine {
    ScriptLine::Done(String::new())
}

fn run(role: Role, lines: Vec<ScriptLine>, tmp: &Path) -> (AgentOutcome, Workspace) {
    let mut ws = workspace(tmp);
    let clock = Arc::new(VirtualClock::new());
    let mut env = ToolEnv::new(ws.sandbox.clone(), clock);
    let mut backend = ScriptedBackend::from_lines(role, lines);
    let out = run_agent_loop(
        &AgentRole::standard(role),
        "task",
        &mut backend,
        &ToolRegistry::standard(),
        &mut env,
        &mut ws,
    );
    (out, ws)
}

#[test]
fn one_call_then_done_gives_three_messages() {
    let tmp = tempfile::tempdir().unwrap();
    let (out, _) = run(
        Role::SeedGenerator,
        vec![call("write_file", &[("path", "corpus/a"), ("content", "x")]), done()],
        tmp.path(),
    );
    assert_eq!(out.status, AgentStatus::Completed);
    let authors: Vec<Author> = out.transcript.messages.iter().map(|m| m.author).collect();
    assert_eq!(authors, vec![Author::Model, Author::Tool, Author::Model]);
    assert_eq!(out.transcript.messages[0].tool_calls[0].id, "call_1_1");
    assert_eq!(out.transcript.messages[1].tool_result_of.as_deref(), Some("call_1_1"));
    assert!(out.report.passed);
}

#[test]
fn repeated_early_exit_fails_validation_after_two_reminders() {
    // Hand trace: DONE -> reminder 1, DONE -> reminder 2, DONE -> give up.
    let tmp = tempfile::tempdir().unwrap();
    let (out, ws) = run(Role::LibraryBuilder, vec![done(), done(), done(), done()], tmp.path());
    assert_eq!(out.status, AgentStatus::ValidationFailed);
    let authors: Vec<Author> = out.transcript.messages.iter().map(|m| m.author).collect();
    assert_eq!(
        authors,
        vec![Author::Model, Author::System, Author::Model, Author::System, Author::Model]
    );
    assert!(out.transcript.messages[1].content.contains("src/build.sh"));
    assert_eq!(out.report.missing_artifacts, vec!["src/build.sh".to_string(), "build/**/*.a".to_string()]);
    // three exit checks are on the progress ledger
    assert_eq!(ws.state.completed_steps.len(), 3);
    assert!(ws.state.completed_steps.iter().all(|s| !s.passed));
}

#[test]
fn reminder_lets_the_agent_recover() {
    let tmp = tempfile::tempdir().unwrap();
    let (out, _) = run(
        Role::SeedGenerator,
        vec![done(), call("write_file", &[("path", "corpus/seed"), ("content", "k=v")]), done()],
        tmp.path(),
    );
    assert_eq!(out.status, AgentStatus::Completed);
    assert_eq!(out.transcript.model_turns(), 3);
}

#[test]
fn tool_outside_the_role_is_bad_arguments() {
    let tmp = tempfile::tempdir().unwrap();
    let (out, ws) = run(
        Role::FuzzerExecutor,
        vec![call("write_file", &[("path", "corpus/a"), ("content", "x")]), done()],
        tmp.path(),
    );
    let result = &out.transcript.messages[1];
    assert_eq!(result.error_kind, Some(ErrorKind::BadArguments));
    assert!(result.content.contains("run_fuzzer"));
    assert!(!ws.root().join("corpus/a").exists());
}

#[test]
fn violations_are_reported_then_acknowledged() {
    let tmp = tempfile::tempdir().unwrap();
    let (out, ws) = run(
        Role::SeedGenerator,
        vec![
            call("view_file", &[("path", "/etc/shadow")]),
            call("write_file", &[("path", "corpus/a"), ("content", "x")]),
            done(),
            done(),
        ],
        tmp.path(),
    );
    // the first DONE fails on the violation; the second passes once it was acknowledged
    assert_eq!(out.status, AgentStatus::Completed);
    let reminder = out.transcript.messages.iter().find(|m| m.author == Author::System).unwrap();
    assert!(reminder.content.contains("/etc/shadow"));
    assert_eq!(ws.sandbox.rejected_count(), 1);
    assert!(ws.sandbox.pending_violations().is_empty());
}

#[test]
fn turn_bound_holds_and_passing_checks_count_as_completed() {
    let tmp = tempfile::tempdir().unwrap();
    let mut role = AgentRole::standard(Role::SeedGenerator);
    role.max_turns = 4;
    let mut ws = workspace(tmp.path());
    let mut env = ToolEnv::new(ws.sandbox.clone(), Arc::new(VirtualClock::new()));
    let lines: Vec<ScriptLine> = (0..10).map(|i| ScriptLine::Say(format!("thinking {i}"))).collect();
    let mut backend = ScriptedBackend::from_lines(Role::SeedGenerator, lines.clone());
    let out = run_agent_loop(&role, "t", &mut backend, &ToolRegistry::standard(), &mut env, &mut ws);
    assert_eq!(out.status, AgentStatus::TurnsExhausted);
    assert_eq!(out.transcript.model_turns(), 4);

    fs::write(ws.root().join("corpus/seed"), "x").unwrap();
    let mut backend = ScriptedBackend::from_lines(Role::SeedGenerator, lines);
    let out = run_agent_loop(&role, "t", &mut backend, &ToolRegistry::standard(), &mut env, &mut ws);
    assert_eq!(out.status, AgentStatus::Completed);
}

/// Fails with a transport error `failures` times, then finishes.
struct Flaky {
    failures: usize,
    calls: usize,
}

impl ModelBackend for Flaky {
    fn complete(&mut self, _req: &ChatRequest) -> Result<Reply, BackendError> {
        self.calls += 1;
        if self.calls <= self.failures {
            return Err(BackendError::Transport("503".into()));
        }
        Ok(Reply {
            content: "done".into(),
            tool_calls: Vec::new(),
            done: true,
        })
    }
}

#[test]
fn transport_errors_back_off_then_give_up() {
    let tmp = tempfile::tempdir().unwrap();
    let mut ws = workspace(tmp.path());
    fs::write(ws.root().join("corpus/seed"), "x").unwrap();
    let clock = Arc::new(VirtualClock::new());
    let mut env = ToolEnv::new(ws.sandbox.clone(), clock.clone());
    let role = AgentRole::standard(Role::SeedGenerator);

    let mut b = Flaky { failures: 2, calls: 0 };
    let out = run_agent_loop(&role, "t", &mut b, &ToolRegistry::standard(), &mut env, &mut ws);
    assert_eq!(out.status, AgentStatus::Completed);
    // waits 1 s then 2 s
    assert_eq!(clock.now(), 3.0);

    let mut b = Flaky { failures: TRANSPORT_RETRIES + 1, calls: 0 };
    let out = run_agent_loop(&role, "t", &mut b, &ToolRegistry::standard(), &mut env, &mut ws);
    assert!(matches!(out.status, AgentStatus::BackendFailed(ref m) if m.contains("503")));
    assert_eq!(b.calls, TRANSPORT_RETRIES + 1);
    assert_eq!(clock.now(), 3.0 + 1.0 + 2.0 + 4.0);
}

#[test]
fn exhausted_tape_is_a_backend_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let (out, _) = run(Role::SeedGenerator, vec![], tmp.path());
    assert_eq!(
        out.status,
        AgentStatus::BackendFailed(BackendError::ScriptExhausted(Role::SeedGenerator).to_string())
    );
}

#[test]
fn script_parsing() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("body.c"), "int main(void) { return 0; }\n").unwrap();
    let text = "# comment\n\nCALL write_file path=harnesses/h1.c content=@body.c\nCALL run_command cmd=\"echo \\\"hi\\\"\\n\" note=\\@literal\nSAY two words\nDONE finished\n";
    let lines = parse_script(text, "t.script", tmp.path()).unwrap();
    assert_eq!(lines.len(), 4);
    let ScriptLine::Call { tool, args } = &lines[0] else { panic!() };
    assert_eq!(tool, "write_file");
    assert_eq!(args["content"], "int main(void) { return 0; }\n");
    let ScriptLine::Call { args, .. } = &lines[1] else { panic!() };
    assert_eq!(args, &BTreeMap::from([("cmd".to_string(), "echo \"hi\"\n".to_string()), ("note".to_string(), "@literal".to_string())]));
    assert_eq!(lines[2], ScriptLine::Say("two words".into()));
    assert_eq!(lines[3], ScriptLine::Done("finished".into()));

    let err = parse_script("DONE\nJUMP now\n", "t.script", tmp.path()).unwrap_err();
    assert!(matches!(err, BackendError::Script { line: 2, .. }));
    let err = parse_script("CALL x a=\"open\n", "t.script", tmp.path()).unwrap_err();
    assert!(err.to_string().contains("unterminated"));
}

#[test]
fn role_tapes_are_independent() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("seed_generator.script"), "DONE\nDONE\n").unwrap();
    fs::write(tmp.path().join("library_builder.script"), "DONE\n").unwrap();
    let b = ScriptedBackend::load(tmp.path()).unwrap();
    assert_eq!(b.remaining(Role::SeedGenerator), 2);
    assert_eq!(b.remaining(Role::LibraryBuilder), 1);
    assert_eq!(b.remaining(Role::CrashAnalyzer), 0);
}

#[test]
fn manager_selection_examples() {
    let mut s = WorkspaceState::new();
    let none = FeedbackSignals::default();
    assert_eq!(select_next_agent(&s, &none), Role::LibraryBuilder);
    s.record_artifact(ArtifactKind::LibraryBuild, "build/lib/liba.a");
    assert_eq!(select_next_agent(&s, &none), Role::DictionaryGenerator);
    s.record_artifact(ArtifactKind::Dictionary, "dict/a.dict");
    assert_eq!(select_next_agent(&s, &none), Role::SeedGenerator);
    s.record_artifact(ArtifactKind::SeedCorpus, "corpus/a");
    assert_eq!(select_next_agent(&s, &none), Role::HarnessGenerator);

    s.phase = Phase::Exploration;
    assert_eq!(select_next_agent(&s, &none), Role::HarnessGenerator);
    let ready = FeedbackSignals {
        harness_ready: true,
        ..FeedbackSignals::default()
    };
    assert_eq!(select_next_agent(&s, &ready), Role::FuzzerExecutor);
    let crashes = FeedbackSignals {
        harness_ready: true,
        pending_crashes: 2,
        coverage_plateau: true,
    };
    assert_eq!(select_next_agent(&s, &crashes), Role::CrashAnalyzer);
    s.phase = Phase::CoverageEvolution;
    assert_eq!(select_next_agent(&s, &none), Role::CoverageAnalyzer);
    assert_eq!(select_next_agent(&s, &crashes), Role::CrashAnalyzer);
    s.phase = Phase::CrashEvolution;
    assert_eq!(select_next_agent(&s, &none), Role::CrashAnalyzer);
}

fn line_strategy() -> impl Strategy<Value = ScriptLine> {
    prop_oneof![
        3 => (0usize..4, "[a-z]{1,6}").prop_map(|(t, s)| match t {
            0 => call("write_file", &[("path", &format!("corpus/{s}")), ("content", &s)]),
            1 => call("view_file", &[("path", &format!("corpus/{s}"))]),
            2 => call("view_file", &[("path", &format!("../{s}"))]),
            _ => call("run_fuzzer", &[("harness", &s)]),
        }),
        1 => "[a-z ]{0,10}".prop_map(ScriptLine::Say),
        1 => Just(done()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transcripts_are_well_formed_bounded_and_deterministic(
        lines in prop::collection::vec(line_strategy(), 0..30),
    ) {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (out_a, _) = run(Role::SeedGenerator, lines.clone(), a.path());
        let (out_b, _) = run(Role::SeedGenerator, lines, b.path());
        prop_assert!(out_a.transcript.check_well_formed().is_ok(), "{:?}", out_a.transcript.check_well_formed());
        prop_assert!(out_a.transcript.model_turns() <= AgentRole::standard(Role::SeedGenerator).max_turns);
        let ja = serde_json::to_string(&out_a).unwrap().replace(&a.path().display().to_string(), "");
        let jb = serde_json::to_string(&out_b).unwrap().replace(&b.path().display().to_string(), "");
        prop_assert_eq!(ja, jb);
    }
}
