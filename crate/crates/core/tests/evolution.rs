use std::fs;
use std::sync::Arc;

use evofuzz::agent::{AgentStatus, ScriptLine, ScriptedBackend};
use evofuzz::clock::VirtualClock;
use evofuzz::coverage::{ApiCatalog, ApiEntry, CoverageNode, Level};
use evofuzz::evolution::{
    choose_strategy, deep_request, route_crash_feedback, run_end_to_end, strategy_for_ratio, surface_clusters,
    surface_request, Constraint, Evolution, EvolutionBudget, EvolutionError, FeedbackLedger, GuidanceDraft,
    GuidanceKind, GuidanceRejection, NextAction, Strategy, DEFAULT_STRATEGY_THRESHOLD, SUMMARY_PATH,
};
use evofuzz::tools::ToolEnv;
use evofuzz::triage::{Evidence, EvidenceKind, TriageVerdict, Verdict};
use evofuzz::workspace::{init_workspace, Phase};
use evofuzz::Role;

fn api(name: &str, file: &str, covered: bool) -> ApiEntry {
    ApiEntry { name: name.into(), file: file.into(), covered }
}

fn catalog_with_ratio(covered: usize, total: usize) -> ApiCatalog {
    ApiCatalog::new((0..total).map(|i| api(&format!("f{i:05}"), "include/a.h", i < covered)))
}

#[test]
fn strategy_switches_at_the_threshold() {
    let t = DEFAULT_STRATEGY_THRESHOLD;
    assert_eq!(strategy_for_ratio(0.8999, t), Strategy::SurfacePhase);
    assert_eq!(strategy_for_ratio(0.90, t), Strategy::DeepPhase);
    assert_eq!(strategy_for_ratio(0.9001, t), Strategy::DeepPhase);
    // the same boundaries through real catalogs
    assert_eq!(choose_strategy(&catalog_with_ratio(8999, 10000), t).unwrap(), Strategy::SurfacePhase);
    assert_eq!(choose_strategy(&catalog_with_ratio(9, 10), t).unwrap(), Strategy::DeepPhase);
    assert_eq!(choose_strategy(&catalog_with_ratio(9001, 10000), t).unwrap(), Strategy::DeepPhase);
    assert!(choose_strategy(&ApiCatalog::default(), t).is_err());
}

fn toy_tree() -> CoverageNode {
    let file = |name: &str, apis: Vec<CoverageNode>| CoverageNode::with_children(Level::File, name, apis);
    let func = |level, name: &str, c, t| CoverageNode::leaf(level, name, c, t);
    CoverageNode::with_children(
        Level::Project,
        "toy",
        vec![CoverageNode::with_children(
            Level::Module,
            "src",
            vec![
                file(
                    "src/a.c",
                    vec![
                        func(Level::Api, "open", 4, 4),
                        func(Level::Api, "read", 1, 9),
                        func(Level::InternalFunction, "scan", 0, 6),
                    ],
                ),
                file("src/b.c", vec![func(Level::Api, "write", 0, 5), func(Level::Api, "close", 0, 2)]),
            ],
        )],
    )
}

fn toy_catalog() -> ApiCatalog {
    ApiCatalog::new([
        api("open", "include/a.h", true),
        api("read", "include/a.h", true),
        api("write", "include/b.h", false),
        api("close", "include/b.h", false),
        api("seek", "include/c.h", false),
    ])
}

#[test]
fn surface_clusters_group_uncovered_apis_by_file() {
    let clusters = surface_clusters(&toy_catalog());
    assert_eq!(clusters.len(), 2);
    assert_eq!(clusters[0].file, "include/b.h");
    assert_eq!(clusters[0].apis, vec!["close".to_string(), "write".to_string()]);
    assert_eq!(clusters[1].apis, vec!["seek".to_string()]);
}

#[test]
fn surface_guidance_validation() {
    let req = surface_request(&toy_tree(), &toy_catalog()).unwrap();
    let draft = |targets: &[&str], helpers: &[&str]| GuidanceDraft {
        target_apis: targets.iter().map(|s| s.to_string()).collect(),
        helper_apis: helpers.iter().map(|s| s.to_string()).collect(),
        rationale: String::new(),
        constraints: Vec::new(),
    };
    assert_eq!(req.validate(&draft(&[], &[])), Err(GuidanceRejection::EmptySequence));
    assert_eq!(
        req.validate(&draft(&["open", "write"], &[])),
        Err(GuidanceRejection::CoveredTargets(vec!["open".into()]))
    );
    assert_eq!(
        req.validate(&draft(&["write"], &["frob"])),
        Err(GuidanceRejection::UnknownApis(vec!["frob".into()]))
    );
    let g = req.validate(&draft(&["write", "close"], &["open"])).unwrap();
    assert_eq!(g.kind, GuidanceKind::SurfaceExpansion);
    // uncovered branches of write (5) and close (2)
    assert_eq!(g.expected_gain, 7);
    assert!(g.render().contains("write -> close"));
}

#[test]
fn deep_guidance_must_address_the_blocker() {
    let req = deep_request(&toy_tree(), &toy_catalog()).unwrap();
    let evofuzz::evolution::GuidanceRequest::Deep { blocker, .. } = &req else { panic!("expected a deep request") };
    assert_eq!(blocker.name, "read");
    assert_eq!(blocker.blocked_complexity, 8);
    assert_eq!(blocker.trace, vec!["src/a.c".to_string()]);

    let mut d = GuidanceDraft {
        target_apis: vec!["open".into(), "read".into()],
        ..GuidanceDraft::default()
    };
    assert_eq!(req.validate(&d), Err(GuidanceRejection::NoHints));
    d.constraints = vec![Constraint::param("buffer length above 64")];
    assert_eq!(req.validate(&d), Err(GuidanceRejection::BlockerNotMentioned("read".into())));
    d.constraints.push(Constraint::pre("open succeeded before read"));
    let g = req.validate(&d).unwrap();
    assert_eq!(g.kind, GuidanceKind::BlockerResolution);
    assert_eq!(g.expected_gain, 8);
}

#[test]
fn fully_covered_tree_has_no_requests() {
    let tree = CoverageNode::with_children(Level::Project, "p", vec![CoverageNode::leaf(Level::Api, "open", 3, 3)]);
    let cat = ApiCatalog::new([api("open", "a.h", true)]);
    assert!(surface_request(&tree, &cat).is_none());
    assert!(deep_request(&tree, &cat).is_none());
}

#[test]
fn constraint_parsing() {
    assert_eq!(Constraint::parse("pre: key is not NULL").unwrap(), Constraint::pre("key is not NULL"));
    assert_eq!(Constraint::parse("Param: len < 8").unwrap(), Constraint::param("len < 8"));
    assert!(Constraint::parse("no prefix").is_err());
    assert!(Constraint::parse("pre:   ").is_err());
    assert!(Constraint::parse("post: x").is_err());
}

fn verdict(v: Verdict, evidence: Vec<Evidence>) -> TriageVerdict {
    TriageVerdict {
        group_key: "g1".into(),
        harness_id: "h1".into(),
        verdict: v,
        recommended_action: v.action(),
        evidence,
        rationale: "r".into(),
        downgraded_from: None,
    }
}

#[test]
fn harness_errors_get_bounded_fix_rounds() {
    let pre = Evidence {
        kind: EvidenceKind::ApiPrecondition,
        reference: "cfg_get".into(),
        detail: "key must not be NULL".into(),
    };
    let v = verdict(Verdict::HarnessError, vec![pre]);
    let mut ledger = FeedbackLedger::default();
    let NextAction::FixHarness(g) = route_crash_feedback(&v, &mut ledger, 3, None) else { panic!() };
    assert_eq!(g.kind, GuidanceKind::CrashFix);
    assert_eq!(g.target_apis, vec!["cfg_get".to_string()]);
    assert_eq!(g.harness_id.as_deref(), Some("h1"));
    assert_eq!(g.constraints, vec![Constraint::pre("cfg_get: key must not be NULL")]);
    for _ in 2..=3 {
        assert!(matches!(route_crash_feedback(&v, &mut ledger, 3, None), NextAction::FixHarness(_)));
    }
    assert_eq!(route_crash_feedback(&v, &mut ledger, 3, None), NextAction::RetireHarness("h1".into()));
    assert!(ledger.is_retired("h1"));
    assert_eq!(ledger.retired_harnesses.len(), 1);
}

#[test]
fn other_verdicts_route() {
    let mut ledger = FeedbackLedger::default();
    assert_eq!(route_crash_feedback(&verdict(Verdict::LibraryBug, vec![]), &mut ledger, 3, None), NextAction::EmitReport);
    let inc = verdict(Verdict::Inconclusive, vec![]);
    assert_eq!(route_crash_feedback(&inc, &mut ledger, 3, None), NextAction::Requeue);
    assert_eq!(route_crash_feedback(&inc, &mut ledger, 3, None), NextAction::RetireCrash);
    // a harness error without evidence cannot be turned into guidance
    let bare = verdict(Verdict::HarnessError, vec![]);
    assert_eq!(route_crash_feedback(&bare, &mut ledger, 3, Some("f")), NextAction::RetireHarness("h1".into()));
}

#[test]
fn budget_checks() {
    assert!(EvolutionBudget::default().check().is_ok());
    let b = EvolutionBudget { wall_clock: 60.0, per_campaign: 120.0, max_harness_fix_rounds: 3 };
    assert!(b.check().unwrap_err().contains("exceeds"));
    let b = EvolutionBudget { wall_clock: 60.0, per_campaign: 0.0, max_harness_fix_rounds: 3 };
    assert!(b.check().is_err());
}

fn evolution(tmp: &std::path::Path, role: Role, lines: Vec<ScriptLine>) -> Evolution {
    let src = tmp.join("lib");
    fs::create_dir_all(&src).unwrap();
    fs::write(src.join("lib.c"), "int x;\n").unwrap();
    let ws = init_workspace(&src, &tmp.join("ws")).unwrap();
    let env = ToolEnv::new(ws.sandbox.clone(), Arc::new(VirtualClock::new()));
    Evolution::new(ws, env, Box::new(ScriptedBackend::from_lines(role, lines)))
}

#[test]
fn zero_budget_gives_an_empty_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let mut evo = evolution(tmp.path(), Role::LibraryBuilder, vec![]);
    evo.budget.wall_clock = 0.0;
    let s = run_end_to_end(&mut evo).unwrap();
    assert!(s.agent_runs.is_empty());
    assert!(s.campaigns.is_empty());
    assert_eq!(s.phases_visited, vec![Phase::Setup, Phase::Done]);
    assert!(evo.ws.root().join(SUMMARY_PATH).is_file());
}

#[test]
fn failing_library_build_aborts_setup() {
    let tmp = tempfile::tempdir().unwrap();
    let done = || ScriptLine::Done(String::new());
    let mut evo = evolution(tmp.path(), Role::LibraryBuilder, vec![done(), done(), done()]);
    let err = run_end_to_end(&mut evo).unwrap_err();
    let EvolutionError::SetupFailed { role, status, log, missing } = err else { panic!("{err}") };
    assert_eq!(role, Role::LibraryBuilder);
    assert_eq!(status, AgentStatus::ValidationFailed);
    assert!(missing.contains("src/build.sh"));
    assert!(evo.ws.root().join(&log).is_file(), "{log}");
    assert_eq!(evo.ws.state.phase, Phase::Setup);
}
