use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use evofuzz::agent::{dispatch_tool_call, ToolCall, ToolRegistry, ToolResult};
use evofuzz::clock::VirtualClock;
use evofuzz::tools::web::{parse_dictionary, Catalog, FileEntry, Project};
use evofuzz::tools::{
    build_library, compile_harness, prune_dictionary, BuildRecipe, BuildSettings, ErrorKind, FixtureProvider,
    MatchKind, RetrievalLedger, ToolEnv, WebState,
};
use evofuzz::workspace::{init_workspace, Workspace};
use proptest::prelude::*;

fn workspace(tmp: &Path) -> Workspace {
    let src = tmp.join("lib");
    fs::create_dir_all(&src).unwrap();
    fs::write(src.join("lib.c"), "int lib_answer(void) { return 42; }\n").unwrap();
    fs::write(src.join("lib.h"), "int lib_answer(void);\n").unwrap();
    init_workspace(&src, &tmp.join("ws")).unwrap()
}

fn env(ws: &Workspace) -> ToolEnv {
    ToolEnv::new(ws.sandbox.clone(), Arc::new(VirtualClock::new()))
}

fn call(env: &mut ToolEnv, tool: &str, args: &[(&str, &str)]) -> ToolResult {
    let registry = ToolRegistry::standard();
    let allowed: BTreeSet<String> = registry.names();
    let c = ToolCall {
        id: "t".into(),
        tool_name: tool.into(),
        arguments: args.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
    };
    dispatch_tool_call(&c, &allowed, &registry, env)
}

fn clang() -> bool {
    Command::new("clang").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn view_write_edit_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = workspace(tmp.path());
    let mut env = env(&ws);
    let r = call(&mut env, "write_file", &[("path", "harnesses/a.c"), ("content", "one\ntwo\nthree\n")]);
    assert!(r.ok, "{}", r.output);
    // end line is exclusive: replaces line 2 only
    let r = call(
        &mut env,
        "apply_edit",
        &[("path", "harnesses/a.c"), ("start_line", "2"), ("end_line", "3"), ("replacement", "TWO")],
    );
    assert!(r.ok, "{}", r.output);
    assert_eq!(fs::read_to_string(ws.root().join("harnesses/a.c")).unwrap(), "one\nTWO\nthree\n");
    let r = call(&mut env, "view_file", &[("path", "harnesses/a.c"), ("start_line", "2"), ("window", "1")]);
    assert!(r.ok);
    assert!(r.output.contains("TWO") && !r.output.contains("three"));
    let r = call(
        &mut env,
        "apply_edit",
        &[("path", "harnesses/a.c"), ("start_line", "3"), ("end_line", "2"), ("replacement", "x")],
    );
    assert_eq!(r.error_kind, Some(ErrorKind::BadArguments));
}

#[test]
fn escaping_paths_are_violations_and_counted() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = workspace(tmp.path());
    let mut env = env(&ws);
    let r = call(&mut env, "view_file", &[("path", "/etc/shadow")]);
    assert_eq!(r.error_kind, Some(ErrorKind::SandboxViolation));
    let r = call(&mut env, "write_file", &[("path", "src/../../escape.txt"), ("content", "x")]);
    assert_eq!(r.error_kind, Some(ErrorKind::SandboxViolation));
    assert!(!tmp.path().join("escape.txt").exists());
    assert_eq!(ws.sandbox.rejected_count(), 2);
    assert_eq!(ws.sandbox.pending_violations().len(), 2);
}

#[test]
fn run_command_output_and_timeout() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = workspace(tmp.path());
    let mut env = env(&ws);
    let r = call(&mut env, "run_command", &[("cmd", "echo hello; ls"), ("cwd", "src")]);
    assert!(r.ok, "{}", r.output);
    assert!(r.output.contains("hello") && r.output.contains("lib.c"));
    let r = call(&mut env, "run_command", &[("cmd", "exit 3")]);
    assert_eq!(r.error_kind, Some(ErrorKind::NonzeroExit));
    let started = std::time::Instant::now();
    let r = call(&mut env, "run_command", &[("cmd", "sleep 30"), ("timeout_s", "1")]);
    assert_eq!(r.error_kind, Some(ErrorKind::Timeout));
    assert!(started.elapsed().as_secs() < 10);
    let r = call(&mut env, "run_command", &[("cmd", "true"), ("cwd", "../..")]);
    assert_eq!(r.error_kind, Some(ErrorKind::SandboxViolation));
}

#[test]
fn unknown_argument_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = workspace(tmp.path());
    let mut env = env(&ws);
    let r = call(&mut env, "view_file", &[("path", "src/lib.c"), ("colour", "red")]);
    assert_eq!(r.error_kind, Some(ErrorKind::BadArguments));
    assert!(r.output.contains("colour"));
}

#[test]
fn compile_without_library_artifacts_is_a_precondition_error() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = workspace(tmp.path());
    let mut env = env(&ws);
    fs::write(ws.root().join("harnesses/h1.c"), "int main(void){return 0;}\n").unwrap();
    let r = call(&mut env, "compile_harness", &[("path", "harnesses/h1.c")]);
    assert_eq!(r.error_kind, Some(ErrorKind::BadArguments));
    assert!(r.output.contains("build"));
}

const BUILD_SH: &str = "set -e\nmkdir -p \"$PREFIX/lib\"\n$CC $CFLAGS -c lib.c -o \"$PREFIX/lib.o\"\nar rcs \"$PREFIX/lib/liblib.a\" \"$PREFIX/lib.o\"\n";
// ignores $CFLAGS, so the archive carries no instrumentation
const PLAIN_SH: &str = "set -e\nmkdir -p \"$PREFIX/lib\"\n$CC -O1 -c lib.c -o \"$PREFIX/lib.o\"\nar rcs \"$PREFIX/lib/liblib.a\" \"$PREFIX/lib.o\"\n";

#[test]
fn build_verification_tells_instrumented_from_plain() {
    if !clang() {
        eprintln!("clang not found; skipping");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let ws = workspace(tmp.path());
    let settings = BuildSettings::default();
    let recipe = BuildRecipe::from_settings(&settings);

    let missing = build_library(ws.root(), &recipe, &settings).unwrap_err();
    assert_eq!(missing.kind, ErrorKind::BadArguments);

    fs::write(ws.root().join("src/build.sh"), PLAIN_SH).unwrap();
    let plain = build_library(ws.root(), &recipe, &settings).unwrap();
    assert!(plain.command.success());
    assert!(!plain.passed());
    assert!(plain.problem().unwrap().contains("instrumentation"));

    fs::write(ws.root().join("src/build.sh"), BUILD_SH).unwrap();
    let good = build_library(ws.root(), &recipe, &settings).unwrap();
    assert!(good.passed(), "{:?}", good.problem());
    assert_eq!(good.artifacts, vec!["build/lib/liblib.a".to_string()]);

    fs::write(
        ws.root().join("harnesses/h1.c"),
        "#include <stdint.h>\n#include <stddef.h>\n#include \"lib.h\"\nint LLVMFuzzerTestOneInput(const uint8_t *d, size_t n) { (void)d; (void)n; return lib_answer() == 42 ? 0 : 1; }\n",
    )
    .unwrap();
    let bin = compile_harness(ws.root(), "harnesses/h1.c", "harnesses/h1", &settings, &[]).unwrap();
    assert!(ws.root().join(bin).is_file());

    fs::write(
        ws.root().join("harnesses/h2.c"),
        "#include <stdint.h>\n#include <stddef.h>\nint LLVMFuzzerTestOneInput(const uint8_t *d, size_t n) { return no_such_symbol(d, n); }\n",
    )
    .unwrap();
    let err = compile_harness(ws.root(), "harnesses/h2.c", "harnesses/h2", &settings, &[]).unwrap_err();
    assert_eq!(err.kind, ErrorKind::NonzeroExit);
    assert!(err.message.contains("no_such_symbol"));
    assert!(!ws.root().join("harnesses/h2").exists());
}

#[test]
fn build_attempts_are_bounded_per_invocation() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = workspace(tmp.path());
    let mut env = env(&ws);
    env.build.max_build_attempts = 2;
    fs::write(ws.root().join("src/build.sh"), "exit 1\n").unwrap();
    for _ in 0..2 {
        assert_eq!(call(&mut env, "build_library", &[]).error_kind, Some(ErrorKind::NonzeroExit));
    }
    let r = call(&mut env, "build_library", &[]);
    assert_eq!(r.error_kind, Some(ErrorKind::BadArguments));
    assert!(r.output.contains("limit"));
}

fn catalog() -> Catalog {
    let file = |content: &str| FileEntry {
        content: Some(content.into()),
        ..FileEntry::default()
    };
    Catalog {
        projects: vec![
            Project {
                id: "libpng".into(),
                description: "PNG reference library".into(),
                tags: vec!["png".into(), "image".into()],
                files: BTreeMap::from([("png.dict".to_string(), file("ihdr=\"IHDR\"\n"))]),
            },
            Project {
                id: "ffmpeg".into(),
                description: "audio and video codecs".into(),
                tags: vec!["video".into(), "codec".into()],
                files: BTreeMap::from([
                    ("h264.dict".to_string(), file("nal=\"\\x00\\x00\\x01\"\n")),
                    (
                        "huge.bin".to_string(),
                        FileEntry {
                            url: Some("https://example.invalid/huge.bin".into()),
                            size: Some(200 * 1024 * 1024),
                            ..FileEntry::default()
                        },
                    ),
                ]),
            },
            Project {
                id: "libvpx".into(),
                description: "VP8/VP9 codec".into(),
                tags: vec!["video".into()],
                files: BTreeMap::new(),
            },
        ],
    }
}

fn web_env(ws: &Workspace) -> ToolEnv {
    let mut e = env(ws);
    e.web = WebState::new(Box::new(FixtureProvider::from_catalog(catalog(), ws.root().to_path_buf())));
    e
}

#[test]
fn search_ranks_exact_before_protocol_matches() {
    let c = catalog();
    let hits = c.search("png");
    assert_eq!(hits.len(), 1);
    assert_eq!((hits[0].project_id.as_str(), hits[0].match_kind), ("libpng", MatchKind::Exact));
    let hits = c.search("video codec");
    assert_eq!(
        hits.iter().map(|h| h.project_id.as_str()).collect::<Vec<_>>(),
        vec!["ffmpeg", "libvpx"]
    );
    assert!(hits.iter().all(|h| h.match_kind == MatchKind::ProtocolMatch));
    assert!(c.search("toycfg").is_empty());
}

#[test]
fn fetch_respects_destinations_and_caps() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = workspace(tmp.path());
    let mut env = web_env(&ws);
    let r = call(&mut env, "fetch_artifact", &[("project", "libpng"), ("selector", "png.dict"), ("dest", "dict/png.dict")]);
    assert!(r.ok, "{}", r.output);
    assert_eq!(fs::read_to_string(ws.root().join("dict/png.dict")).unwrap(), "ihdr=\"IHDR\"\n");

    let r = call(&mut env, "fetch_artifact", &[("project", "libpng"), ("selector", "png.dict"), ("dest", "src/png.dict")]);
    assert_eq!(r.error_kind, Some(ErrorKind::SandboxViolation));

    let r = call(&mut env, "fetch_artifact", &[("project", "ffmpeg"), ("selector", "huge.bin"), ("dest", "corpus/huge.bin")]);
    assert!(!r.ok);
    assert!(!ws.root().join("corpus/huge.bin").exists());
}

#[test]
fn provider_outage_is_reported_with_a_fallback() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = workspace(tmp.path());
    let mut env = env(&ws);
    let r = call(&mut env, "search_web", &[("query", "png")]);
    assert_eq!(r.error_kind, Some(ErrorKind::ProviderUnavailable));
    assert!(r.output.contains("fall back"));
}

#[test]
fn retrieval_ledger_tracks_selected_projects() {
    let mut l = RetrievalLedger::default();
    for id in ["a", "b", "c"] {
        assert!(l.select(id));
    }
    assert!(!l.select("a"));
    assert_eq!(l.total(), 3);
    l.record_done("a", "dict/a.dict");
    l.record_done("a", "corpus/a1");
    l.record_failed("b", "offline");
    // a project that delivered files stays done
    l.record_failed("a", "late failure");
    assert_eq!(l.total(), 3);
    assert_eq!(l.pending, vec!["c".to_string()]);
    assert_eq!(l.done, vec![("a".to_string(), vec!["dict/a.dict".to_string(), "corpus/a1".to_string()])]);
    assert_eq!(l.failed, vec![("b".to_string(), "offline".to_string())]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ledger_conserves_projects(ops in prop::collection::vec((0u8..3, 0usize..6), 0..40)) {
        let ids: Vec<String> = (0..6).map(|i| format!("p{i}")).collect();
        let mut l = RetrievalLedger::default();
        let mut selected = BTreeSet::new();
        for (op, i) in ops {
            let id = &ids[i];
            match op {
                0 => { l.select(id); }
                1 => l.record_done(id, "f"),
                _ => l.record_failed(id, "x"),
            }
            selected.insert(id.clone());
            prop_assert_eq!(l.total(), selected.len());
            let mut seen = BTreeSet::new();
            for p in l.pending.iter().chain(l.done.iter().map(|d| &d.0)).chain(l.failed.iter().map(|f| &f.0)) {
                prop_assert!(seen.insert(p.clone()), "{} listed twice", p);
            }
        }
    }

    #[test]
    fn pruned_dictionary_is_a_deduplicated_subset(
        tokens in prop::collection::vec("[a-z]{1,4}", 0..20),
        keep_mask in prop::collection::vec(any::<bool>(), 20),
    ) {
        let raw: String = tokens.iter().enumerate().map(|(i, t)| format!("t{i}=\"{t}\"\n")).collect();
        let keep: Vec<String> = tokens.iter().enumerate().filter(|(i, _)| keep_mask[*i]).map(|(i, _)| format!("t{i}")).collect();
        let pruned = prune_dictionary(&raw, Some(&keep)).unwrap();
        let out = parse_dictionary(&pruned.text).unwrap();
        let mut bytes = BTreeSet::new();
        for e in &out {
            prop_assert!(bytes.insert(e.bytes.clone()), "duplicate token survived");
            prop_assert!(keep.contains(e.name.as_ref().unwrap()));
        }
        let wanted: BTreeSet<&String> = tokens.iter().enumerate().filter(|(i, _)| keep_mask[*i]).map(|(_, t)| t).collect();
        prop_assert_eq!(out.len(), wanted.len());
        prop_assert_eq!(pruned.kept + pruned.dropped, tokens.len());
    }
}

#[test]
fn malformed_dictionary_lines_are_reported_with_line_numbers() {
    let errs = parse_dictionary("ok=\"a\"\nbad line\n# c\n\"b\"\n=\"x\"\n").unwrap_err();
    assert_eq!(errs.iter().map(|e| e.0).collect::<Vec<_>>(), vec![2, 5]);
}
