use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use evofuzz::config::{BackendConfig, Config};
use evofuzz::coverage::{render_context, Level, MIN_RENDER_BUDGET};
use evofuzz::evolution::{run_end_to_end, triage_pending, SUMMARY_PATH};
use evofuzz::fuzz::Campaign;
use evofuzz::stats::{parse_trials, summarize_trials};
use evofuzz::tools::{build_library, refresh_coverage, run_fuzzer, BuildRecipe};
use evofuzz::util::glob_files;

#[derive(Parser, Debug)]
#[command(name = "evofuzz", version, about = "Agent-driven evolutionary fuzzing of C libraries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the whole workflow until the budget is spent.
    Run(RunArgs),
    /// Run the library build script and verify its artifacts.
    Build(Common),
    /// Run one campaign on a compiled harness.
    Fuzz(FuzzArgs),
    /// Triage recorded crash groups that have no verdict yet.
    Triage(Common),
    /// Measure coverage for a campaign and print a view of it.
    Coverage(CoverageArgs),
    /// Reports over recorded trials.
    Report {
        #[command(subcommand)]
        what: ReportCommand,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file.
    #[arg(long, short)]
    config: PathBuf,
    /// Workspace root, overriding the config.
    #[arg(long)]
    workspace: Option<PathBuf>,
    /// Mock backend script file or directory, overriding the config.
    #[arg(long)]
    script: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    budget: Option<f64>,
    /// Per-campaign budget in seconds.
    #[arg(long)]
    per_campaign: Option<f64>,
    /// Strategy switch threshold on API coverage.
    #[arg(long)]
    strategy_threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct FuzzArgs {
    #[command(flatten)]
    common: Common,
    /// Harness id, e.g. h1.
    #[arg(long)]
    harness: String,
    /// Campaign budget in seconds.
    #[arg(long)]
    budget: Option<f64>,
}

#[derive(Args, Debug)]
struct CoverageArgs {
    #[command(flatten)]
    common: Common,
    /// Campaign id; defaults to the latest.
    #[arg(long)]
    campaign: Option<String>,
    /// project, module, file, api, function or branch.
    #[arg(long, default_value = "file")]
    level: String,
    /// Character budget for the view.
    #[arg(long, default_value_t = 4000)]
    chars: usize,
}

#[derive(Subcommand, Debug)]
enum ReportCommand {
    /// CV and pairwise Mann-Whitney U over `label value` lines.
    Stats {
        #[arg(long)]
        input: PathBuf,
    },
}

fn load(common: &Common) -> Result<Config> {
    let mut cfg = Config::load(&common.config).map_err(|e| anyhow!(e))?;
    let cwd = std::env::current_dir().context("reading the current directory")?;
    if let Some(w) = &common.workspace {
        cfg.workspace = cwd.join(w);
    }
    if let Some(s) = &common.script {
        cfg.backend = BackendConfig::Mock { script: cwd.join(s) };
    }
    cfg.validate().map_err(|e| anyhow!(e))?;
    Ok(cfg)
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let mut cfg = load(&a.common)?;
    if let Some(b) = a.budget {
        cfg.budget.wall_clock = b;
    }
    if let Some(b) = a.per_campaign {
        cfg.budget.per_campaign = b;
    }
    if let Some(t) = a.strategy_threshold {
        cfg.strategy_threshold = t;
    }
    cfg.validate().map_err(|e| anyhow!(e))?;
    let mut evo = cfg.assemble().map_err(|e| anyhow!(e))?;
    let summary = run_end_to_end(&mut evo)?;
    let phases: Vec<String> = summary.phases_visited.iter().map(|p| p.to_string()).collect();
    println!("stop: {}", summary.stop_reason);
    println!("phases: {}", phases.join(" -> "));
    println!(
        "harnesses: {}  campaigns: {}  crash groups: {}  verdicts: {}  bug reports: {}",
        summary.harnesses.len(),
        summary.campaigns.len(),
        summary.crash_groups,
        summary.verdicts.len(),
        summary.bug_reports.len()
    );
    if summary.branches_total > 0 {
        println!("branches: {}/{}", summary.branches_covered, summary.branches_total);
    }
    println!("summary: {}", evo.ws.root().join(SUMMARY_PATH).display());
    Ok(())
}

fn cmd_build(c: &Common) -> Result<()> {
    let cfg = load(c)?;
    let ws = cfg.open_workspace().map_err(|e| anyhow!(e))?;
    let recipe = BuildRecipe::from_settings(&cfg.build);
    let out = build_library(ws.root(), &recipe, &cfg.build).map_err(|f| anyhow!(f.message))?;
    if let Some(problem) = out.problem() {
        eprintln!("{problem}");
        bail!("library build failed verification");
    }
    println!("artifacts: {}", out.artifacts.join(", "));
    println!("instrumented: {}", out.instrumented.join(", "));
    Ok(())
}

fn cmd_fuzz(a: &FuzzArgs) -> Result<()> {
    let mut cfg = load(&a.common)?;
    if let Some(b) = a.budget {
        cfg.budget.per_campaign = b;
        cfg.budget.wall_clock = cfg.budget.wall_clock.max(b);
    }
    let ws = cfg.open_workspace().map_err(|e| anyhow!(e))?;
    let mut env = cfg.tool_env(&ws).map_err(|e| anyhow!(e))?;
    let c = run_fuzzer(&mut env, &a.harness).map_err(|f| anyhow!(f.message))?;
    if let Err(e) = refresh_coverage(&mut env, &c.id, &c.harness_id) {
        eprintln!("coverage not measured: {e}");
    }
    println!(
        "campaign {}: {:?} after {:.0}s, {} features, {} crash(es); record {}",
        c.id,
        c.stop_reason,
        c.duration(),
        c.final_features(),
        c.crashes.len(),
        Campaign::record_path(&c.id)
    );
    Ok(())
}

fn cmd_triage(c: &Common) -> Result<()> {
    let cfg = load(c)?;
    let mut evo = cfg.assemble().map_err(|e| anyhow!(e))?;
    let verdicts = triage_pending(&mut evo)?;
    if verdicts.is_empty() {
        println!("no untriaged crash groups");
    }
    for v in verdicts {
        println!("{} harness {}: {:?}", v.group_key, v.harness, v.verdict);
    }
    Ok(())
}

fn cmd_coverage(a: &CoverageArgs) -> Result<()> {
    let cfg = load(&a.common)?;
    let level = Level::parse(&a.level).ok_or_else(|| anyhow!("unknown coverage level `{}`", a.level))?;
    let ws = cfg.open_workspace().map_err(|e| anyhow!(e))?;
    let campaign = match &a.campaign {
        Some(c) => c.clone(),
        None => glob_files(ws.root(), "campaigns/*/campaign.json")
            .last()
            .and_then(|p| p.split('/').nth(1).map(String::from))
            .ok_or_else(|| anyhow!("no campaigns recorded in {}", ws.root().display()))?,
    };
    let record = Campaign::load(ws.root(), &campaign).map_err(|e| anyhow!(e))?;
    let mut env = cfg.tool_env(&ws).map_err(|e| anyhow!(e))?;
    refresh_coverage(&mut env, &campaign, &record.harness_id).map_err(|e| anyhow!(e))?;
    let view = env.coverage.current.as_ref().expect("just measured");
    print!("{}", render_context(&view.root, level, a.chars.max(MIN_RENDER_BUDGET)));
    Ok(())
}

fn cmd_report(what: &ReportCommand) -> Result<()> {
    match what {
        ReportCommand::Stats { input } => {
            let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
            let series = parse_trials(&text).map_err(|e| anyhow!("{}: {e}", input.display()))?;
            print!("{}", summarize_trials(&series));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Build(c) => cmd_build(c),
        Command::Fuzz(a) => cmd_fuzz(a),
        Command::Triage(c) => cmd_triage(c),
        Command::Coverage(a) => cmd_coverage(a),
        Command::Report { what } => cmd_report(what),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("evofuzz: {msg}");
            ExitCode::FAILURE
        }
    }
}
