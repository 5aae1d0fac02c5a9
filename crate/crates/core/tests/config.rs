use std::fs;
use std::path::{Path, PathBuf};

use evofuzz::config::{
    BackendConfig, ClockKind, Config, ConfigError, CoverageSourceConfig, DebuggerConfig, FuzzerConfig, WebConfig,
};
use evofuzz::evolution::DEFAULT_STRATEGY_THRESHOLD;
use proptest::prelude::*;

fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo")
}

#[test]
fn demo_config_loads() {
    let path = demo_dir().join("demo.toml");
    let c = Config::load(&path).unwrap();
    assert_eq!(c.clock, Some(ClockKind::Virtual));
    assert!(matches!(c.backend, BackendConfig::Mock { .. }));
    assert!(matches!(c.fuzzer, FuzzerConfig::Stub { .. }));
    assert!(matches!(c.coverage.source, CoverageSourceConfig::Fixture { .. }));
    assert_eq!(c.budget.tick, 10.0);
    assert_eq!(c.budget.window, 60.0);
    assert_eq!(c.budget.threshold, 1e-4);
    assert_eq!(c.strategy_threshold, DEFAULT_STRATEGY_THRESHOLD);
    assert_eq!(c.workspace_root(), demo_dir().join("../target/demo-workspace"));
    let p = c.policy();
    assert_eq!((p.tick, p.window, p.budget), (10.0, 60.0, 600.0));
}

#[test]
fn round_trip_through_toml() {
    let c = Config::load(&demo_dir().join("demo.toml")).unwrap();
    let text = c.to_toml();
    let back = Config::parse(&text, &demo_dir().join("demo.toml")).unwrap();
    assert_eq!(back, c);
}

fn minimal(dir: &Path, extra: &str) -> String {
    fs::create_dir_all(dir.join("lib")).unwrap();
    format!(
        "workspace = \"ws\"\ntarget = \"lib\"\n{extra}\n\
         [backend]\nkind = \"http\"\nendpoint = \"http://localhost:1/v1\"\nmodel = \"m\"\n\
         [fuzzer]\nkind = \"libfuzzer\"\n\
         [web]\nprovider = \"none\"\n\
         [coverage]\nsource = \"llvm\"\n\
         [debugger]\nkind = \"none\"\n"
    )
}

#[test]
fn defaults_fill_in() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("c.toml");
    fs::write(&path, minimal(tmp.path(), "")).unwrap();
    let c = Config::load(&path).unwrap();
    assert_eq!(c.clock, None);
    assert_eq!(c.coverage.api_headers, "**/*.h");
    assert!(c.coverage.exclude.is_empty());
    assert_eq!(c.web, WebConfig::None);
    assert_eq!(c.debugger, DebuggerConfig::None);
    let BackendConfig::Http { timeout_s, api_key_env, .. } = &c.backend else { panic!() };
    assert_eq!((*timeout_s, api_key_env.is_none()), (300, true));
    assert!(c.validate().is_ok());
}

fn load_err(extra: &str) -> ConfigError {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("c.toml");
    fs::write(&path, minimal(tmp.path(), extra)).unwrap();
    Config::load(&path).unwrap_err()
}

#[test]
fn invalid_values_are_named() {
    let e = load_err("strategy_threshold = 1.5").to_string();
    assert!(e.contains("strategy_threshold"), "{e}");
    let e = load_err("strategy_threshold = 0.0").to_string();
    assert!(e.contains("strategy_threshold"), "{e}");
    let e = load_err("[budget]\nthreshold = 0.0").to_string();
    assert!(e.contains("threshold"), "{e}");
    let e = load_err("[budget]\nwall_clock = 60\nper_campaign = 120").to_string();
    assert!(e.contains("exceeds"), "{e}");
    assert!(matches!(load_err("colour = \"blue\""), ConfigError::Parse { .. }));
}

#[test]
fn missing_paths_are_reported_with_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("c.toml");
    let text = minimal(tmp.path(), "").replace("target = \"lib\"", "target = \"nope\"");
    fs::write(&path, text).unwrap();
    let e = Config::load(&path).unwrap_err();
    let ConfigError::MissingPath { what, path: missing } = &e else { panic!("{e}") };
    assert_eq!(*what, "target source");
    assert_eq!(missing, &tmp.path().join("nope"));
    assert!(e.to_string().contains("nope"));

    let e = Config::load(&tmp.path().join("absent.toml")).unwrap_err();
    assert!(matches!(e, ConfigError::Read { .. }));
    assert!(e.to_string().contains("absent.toml"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn budgets_round_trip(
        wall in 100.0f64..1e6,
        frac in 0.01f64..1.0,
        tick in 1.0f64..30.0,
        windows in 1u32..20,
        threshold in 1e-6f64..0.5,
        strategy in 0.05f64..1.0,
        rounds in 0u32..10,
        exclude in prop::collection::vec("[a-z]{1,5}/\\*\\*", 0..3),
    ) {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("c.toml");
        fs::write(&path, minimal(tmp.path(), "")).unwrap();
        let mut c = Config::load(&path).unwrap();
        c.budget.wall_clock = wall;
        c.budget.per_campaign = (wall * frac).max(tick);
        c.budget.tick = tick;
        c.budget.window = tick * windows as f64;
        c.budget.threshold = threshold;
        c.budget.max_harness_fix_rounds = rounds;
        c.strategy_threshold = strategy;
        c.coverage.exclude = exclude;
        let back = Config::parse(&c.to_toml(), &path).unwrap();
        prop_assert_eq!(back, c);
    }
}
