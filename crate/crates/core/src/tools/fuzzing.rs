use super::{p, Args, ErrorKind, Tool, ToolEnv, ToolFailure, ToolOutput, ToolSpec};
use crate::fuzz::{merge_corpus, next_campaign_id, run_campaign, Campaign, CampaignSpec};
use crate::util::glob_files;

/// Runs one campaign on a compiled harness and records it under `campaigns/`.
pub fn run_fuzzer(env: &mut ToolEnv, harness: &str) -> Result<Campaign, ToolFailure> {
    if harness.is_empty() || !harness.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(ToolFailure::bad_args(format!("bad harness id `{harness}`")));
    }
    let binary = format!("harnesses/{harness}");
    if !env.root().join(&binary).is_file() {
        return Err(ToolFailure::bad_args(format!(
            "{binary} does not exist; compile harnesses/{harness}.c first"
        )));
    }
    let root = env.root().to_path_buf();
    let spec = CampaignSpec {
        id: next_campaign_id(&root),
        harness_id: harness.to_string(),
        root: root.clone(),
        binary,
        corpus: "corpus".into(),
        dict: glob_files(&root, "dict/*.dict").into_iter().next(),
    };
    std::fs::create_dir_all(root.join(spec.dir()))
        .map_err(|e| ToolFailure::new(ErrorKind::NonzeroExit, format!("creating {}: {e}", spec.dir())))?;
    let campaign = run_campaign(&spec, env.fuzz.adapter.as_mut(), &env.fuzz.policy, env.clock.as_ref());
    campaign
        .save(&root)
        .map_err(|e| ToolFailure::new(ErrorKind::NonzeroExit, e.to_string()))?;
    env.session.campaigns.push(campaign.id.clone());
    Ok(campaign)
}

pub(crate) struct RunFuzzer;

impl Tool for RunFuzzer {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: "run_fuzzer",
            description: "Fuzz a compiled harness until a crash, a coverage plateau or the time budget, then merge new inputs into corpus/.",
            params: vec![p("harness", "harness id, e.g. h1 for harnesses/h1", true)],
        }
    }

    fn call(&self, args: &Args, env: &mut ToolEnv) -> ToolOutput {
        let campaign = run_fuzzer(env, args.req("harness")?)?;
        let merged = merge_corpus(env.root(), &campaign, "corpus");
        let mut s = format!(
            "campaign {} on {}: stopped by {:?} after {:.0}s, {} features, {} crashes\n",
            campaign.id,
            campaign.harness_id,
            campaign.stop_reason,
            campaign.duration(),
            campaign.final_features(),
            campaign.crashes.len()
        );
        for c in &campaign.crashes {
            s.push_str(&format!("  crash input {}\n", c.input_file));
        }
        if let Some(d) = &campaign.diagnostic {
            s.push_str(&format!("  note: {d}\n"));
        }
        s.push_str(&format!(
            "corpus merge: {} added, {} already present, {} failed\nrecord: {}\n",
            merged.added,
            merged.skipped,
            merged.failed.len(),
            Campaign::record_path(&campaign.id)
        ));
        Ok(s)
    }
}
