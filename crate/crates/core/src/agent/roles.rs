use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::Role;

pub const GENERATOR_MAX_TURNS: usize = 40;
pub const ANALYZER_MAX_TURNS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRole {
    pub name: Role,
    pub system_prompt: String,
    pub allowed_tools: BTreeSet<String>,
    pub max_turns: usize,
}

const FILE_TOOLS: [&str; 5] = ["view_file", "write_file", "apply_edit", "search_files", "run_command"];

pub fn default_tools(role: Role) -> Vec<&'static str> {
    let mut t: Vec<&str> = match role {
        Role::Manager => return Vec::new(),
        Role::FuzzerExecutor => vec!["view_file", "search_files", "run_fuzzer"],
        Role::CoverageAnalyzer => vec![
            "view_file",
            "search_files",
            "coverage_report",
            "coverage_blockers",
            "submit_guidance",
        ],
        Role::CrashAnalyzer => vec![
            "view_file",
            "search_files",
            "crash_initial_analysis",
            "crash_context_inspection",
            "minimize_harness",
            "submit_verdict",
        ],
        _ => FILE_TOOLS.to_vec(),
    };
    match role {
        Role::LibraryBuilder => t.push("build_library"),
        Role::DictionaryGenerator => t.extend(["search_web", "fetch_artifact", "track_web_retrieve_progress", "prune_dictionary"]),
        Role::SeedGenerator => t.extend(["search_web", "fetch_artifact", "track_web_retrieve_progress"]),
        Role::HarnessGenerator => t.push("compile_harness"),
        _ => {}
    }
    t
}

const WORKSPACE_RULES: &str = "\
Workspace: you work inside a fixed directory layout (src, build, dict, corpus, harnesses, campaigns, \
coverage, crashes, reports, logs). Use workspace-relative paths; anything outside is rejected. \
When your task is complete, reply with no tool call (or DONE). Your results are checked on exit and \
you will be told what is missing.";

pub fn system_prompt(role: Role) -> String {
    let body = match role {
        Role::Manager => "You are the Manager. You do not call tools.",
        Role::LibraryBuilder => "\
You are the Library Builder.
Goal: a build of the target library instrumented for fuzzing.
Steps:
1. Read the sources under src/ and find how the library is built.
2. Write src/build.sh. It must compile with $CC and $CFLAGS (never hard-code compilers or sanitizer flags) and install static libraries and public headers under $PREFIX (lib/ and include/).
3. Call build_library. It runs the script and verifies the archives and their instrumentation.
4. If verification fails, read the log tail, fix the script and build again.",
        Role::DictionaryGenerator => "\
You are the Dictionary Generator.
Goal: a fuzzer dictionary in dict/ with tokens of the target's input format.
Steps:
1. Work out which format or protocol the library parses.
2. search_web for the library itself (Exact Match) and for projects handling the same format (Protocol Match).
3. Track the projects you pick with track_web_retrieve_progress and fetch their dictionaries with fetch_artifact.
4. prune_dictionary to keep only tokens that fit the target's format.
If no provider is reachable, write a minimal dictionary from standard knowledge of the format.",
        Role::SeedGenerator => "\
You are the Seed Generator.
Goal: a seed corpus in corpus/ of small valid inputs for the target's format.
Steps:
1. search_web for the library and for projects with test files of the same format.
2. Fetch a handful of small sample files into corpus/ and track progress.
3. If nothing can be fetched, write minimal valid inputs yourself.",
        Role::HarnessGenerator => "\
You are the Harness Generator.
Goal: a compiled libFuzzer harness under harnesses/.
Steps:
1. Read the public headers and any guidance given in the task.
2. Write harnesses/<id>.c defining LLVMFuzzerTestOneInput that maps the input bytes onto the requested API sequence, with the needed init and cleanup calls.
3. compile_harness and fix every diagnostic until it compiles.
Respect API preconditions: check return values and never pass NULL where the API forbids it.",
        Role::FuzzerExecutor => "\
You are the Fuzzer Executor.
Goal: a campaign record for the harness named in the task.
Call run_fuzzer with that harness id and report the outcome.",
        Role::CoverageAnalyzer => "\
You are the Coverage Analyzer.
Goal: one accepted piece of harness guidance.
Surface exploration (API coverage below the threshold): pick a group of related uncovered APIs from the clusters given, order them into a meaningful call sequence and add the init, cleanup or validation helpers it needs.
Deep exploration: study the top blocker with coverage_report and coverage_blockers, find which parameter values or preconditions stop execution from getting past it and state them as constraints that name the blocked function.
Submit with submit_guidance; if it is rejected, fix what it names and resubmit.",
        Role::CrashAnalyzer => "\
You are the Crash Analyzer.
Goal: a verdict on the crash under analysis: LibraryBug (a defect in the library) or HarnessError (the harness misused the API).
Steps:
1. crash_initial_analysis for the stack and source context.
2. minimize_harness to strip statements that do not matter.
3. crash_context_inspection to confirm your hypothesis with debugger probes.
4. submit_verdict with evidence: a library bug needs a source citation in src/ or a debugger observation; a harness error needs the API precondition the harness violated. Unsupported verdicts are recorded as Inconclusive.",
    };
    format!("{body}\n\n{WORKSPACE_RULES}")
}

impl AgentRole {
    pub fn standard(role: Role) -> Self {
        Self {
            name: role,
            system_prompt: system_prompt(role),
            allowed_tools: default_tools(role).into_iter().map(String::from).collect(),
            max_turns: match role {
                Role::Manager => 1,
                r if r.is_analyzer() => ANALYZER_MAX_TURNS,
                _ => GENERATOR_MAX_TURNS,
            },
        }
    }
}
