use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::{ApiCatalog, Blocker};
use crate::triage::{EvidenceKind, TriageVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GuidanceKind {
    SurfaceExpansion,
    BlockerResolution,
    CrashFix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintKind {
    ParameterHint,
    Precondition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub text: String,
}

impl Constraint {
    pub fn param(text: impl Into<String>) -> Self {
        Self { kind: ConstraintKind::ParameterHint, text: text.into() }
    }

    pub fn pre(text: impl Into<String>) -> Self {
        Self { kind: ConstraintKind::Precondition, text: text.into() }
    }

    /// Parses `param: ...` or `pre: ...`.
    pub fn parse(line: &str) -> Result<Self, String> {
        let (tag, text) = line
            .split_once(':')
            .ok_or_else(|| format!("constraint `{line}` needs a `param:` or `pre:` prefix"))?;
        let text = text.trim();
        if text.is_empty() {
            return Err(format!("constraint `{line}` is empty"));
        }
        match tag.trim().to_ascii_lowercase().as_str() {
            "param" | "parameter" => Ok(Self::param(text)),
            "pre" | "precondition" => Ok(Self::pre(text)),
            other => Err(format!("unknown constraint kind `{other}`; use param or pre")),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ConstraintKind::ParameterHint => write!(f, "param: {}", self.text),
            ConstraintKind::Precondition => write!(f, "pre: {}", self.text),
        }
    }
}

/// Instructions for the next harness generation round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarnessGuidance {
    pub kind: GuidanceKind,
    /// Invocation sequence, in order.
    pub target_apis: Vec<String>,
    pub helper_apis: Vec<String>,
    pub rationale: String,
    /// Uncovered branches the guidance aims at.
    pub expected_gain: u64,
    pub constraints: Vec<Constraint>,
    /// Harness to rewrite, for crash fixes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harness_id: Option<String>,
}

impl HarnessGuidance {
    /// Task text handed to the harness generator.
    pub fn render(&self) -> String {
        let mut s = format!("Guidance ({:?}):\n", self.kind);
        if let Some(h) = &self.harness_id {
            s.push_str(&format!("  harness to fix: harnesses/{h}.c\n"));
        }
        s.push_str(&format!("  call sequence: {}\n", self.target_apis.join(" -> ")));
        if !self.helper_apis.is_empty() {
            s.push_str(&format!("  helpers: {}\n", self.helper_apis.join(", ")));
        }
        s.push_str(&format!("  expected gain: {} branches\n", self.expected_gain));
        for c in &self.constraints {
            s.push_str(&format!("  {c}\n"));
        }
        if !self.rationale.is_empty() {
            s.push_str(&format!("  rationale: {}\n", self.rationale));
        }
        s
    }
}

/// What the coverage analyzer proposes through `submit_guidance`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GuidanceDraft {
    pub target_apis: Vec<String>,
    pub helper_apis: Vec<String>,
    pub rationale: String,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GuidanceRejection {
    #[error("the call sequence is empty")]
    EmptySequence,
    #[error("already covered: {}", .0.join(", "))]
    CoveredTargets(Vec<String>),
    #[error("not in the API catalog: {}", .0.join(", "))]
    UnknownApis(Vec<String>),
    #[error("no constraint mentions the blocked function `{0}`")]
    BlockerNotMentioned(String),
    #[error("at least one parameter or precondition hint is required")]
    NoHints,
}

/// Uncovered public APIs sharing a declaring file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiCluster {
    pub file: String,
    pub apis: Vec<String>,
}

/// What the scheduler asked the coverage analyzer for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GuidanceRequest {
    Surface {
        clusters: Vec<ApiCluster>,
        catalog: ApiCatalog,
        /// Uncovered branch count per API, for the expected gain.
        api_totals: Vec<(String, u64)>,
    },
    Deep {
        blocker: Blocker,
        catalog: ApiCatalog,
    },
}

impl GuidanceRequest {
    pub fn kind(&self) -> GuidanceKind {
        match self {
            GuidanceRequest::Surface { .. } => GuidanceKind::SurfaceExpansion,
            GuidanceRequest::Deep { .. } => GuidanceKind::BlockerResolution,
        }
    }

    /// Checks a draft and turns it into guidance, or names what is wrong with it.
    pub fn validate(&self, draft: &GuidanceDraft) -> Result<HarnessGuidance, GuidanceRejection> {
        if draft.target_apis.is_empty() {
            return Err(GuidanceRejection::EmptySequence);
        }
        let catalog = match self {
            GuidanceRequest::Surface { catalog, .. } | GuidanceRequest::Deep { catalog, .. } => catalog,
        };
        let unknown: Vec<String> = draft
            .target_apis
            .iter()
            .chain(&draft.helper_apis)
            .filter(|n| catalog.get(n).is_none())
            .cloned()
            .collect();
        if !unknown.is_empty() {
            return Err(GuidanceRejection::UnknownApis(dedup(unknown)));
        }
        let expected_gain = match self {
            GuidanceRequest::Surface { api_totals, .. } => {
                let covered: Vec<String> = draft
                    .target_apis
                    .iter()
                    .filter(|n| catalog.get(n).is_some_and(|e| e.covered))
                    .cloned()
                    .collect();
                if !covered.is_empty() {
                    return Err(GuidanceRejection::CoveredTargets(dedup(covered)));
                }
                dedup(draft.target_apis.clone())
                    .iter()
                    .map(|n| api_totals.iter().find(|(a, _)| a == n).map_or(0, |(_, t)| *t))
                    .sum()
            }
            GuidanceRequest::Deep { blocker, .. } => {
                if draft.constraints.is_empty() {
                    return Err(GuidanceRejection::NoHints);
                }
                let func = blocker.function();
                if !draft.constraints.iter().any(|c| c.text.contains(func)) {
                    return Err(GuidanceRejection::BlockerNotMentioned(func.to_string()));
                }
                blocker.blocked_complexity
            }
        };
        Ok(HarnessGuidance {
            kind: self.kind(),
            target_apis: draft.target_apis.clone(),
            helper_apis: draft.helper_apis.clone(),
            rationale: draft.rationale.clone(),
            expected_gain,
            constraints: draft.constraints.clone(),
            harness_id: None,
        })
    }

    /// Task text for the coverage analyzer.
    pub fn render(&self) -> String {
        match self {
            GuidanceRequest::Surface { clusters, .. } => {
                let mut s = String::from(
                    "Surface exploration. Uncovered public APIs grouped by declaring file, largest group first:\n",
                );
                for c in clusters {
                    s.push_str(&format!("  {} ({}): {}\n", c.file, c.apis.len(), c.apis.join(", ")));
                }
                s.push_str(
                    "Choose a related call sequence of uncovered APIs plus any init/cleanup helpers and submit it with submit_guidance.\n",
                );
                s
            }
            GuidanceRequest::Deep { blocker, .. } => format!(
                "Deep exploration. Top blocker: {} `{}` in {} with {} uncovered branches ({} of {} covered).\n\
                 Entry chain: {}\n\
                 Submit a call sequence that reaches it with submit_guidance; constraints must mention `{}` and give parameter or precondition hints.\n",
                blocker.level.label(),
                blocker.name,
                blocker.file,
                blocker.blocked_complexity,
                blocker.covered,
                blocker.total,
                blocker.trace.join(" > "),
                blocker.function(),
            ),
        }
    }
}

fn dedup(mut v: Vec<String>) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    v.retain(|x| seen.insert(x.clone()));
    v
}

/// Mechanical crash-fix guidance built from a harness-error verdict: the APIs
/// named by violated preconditions become the targets and every piece of
/// evidence becomes a precondition constraint.
pub fn crash_fix_guidance(verdict: &TriageVerdict, fallback_api: Option<&str>) -> Option<HarnessGuidance> {
    let mut targets: Vec<String> = verdict
        .evidence
        .iter()
        .filter(|e| e.kind == EvidenceKind::ApiPrecondition)
        .map(|e| e.reference.trim().to_string())
        .filter(|r| !r.is_empty())
        .collect();
    if targets.is_empty() {
        targets.extend(fallback_api.map(str::to_string));
    }
    let targets = dedup(targets);
    if targets.is_empty() || verdict.evidence.is_empty() {
        return None;
    }
    Some(HarnessGuidance {
        kind: GuidanceKind::CrashFix,
        target_apis: targets,
        helper_apis: Vec::new(),
        rationale: verdict.rationale.clone(),
        expected_gain: 0,
        constraints: verdict
            .evidence
            .iter()
            .map(|e| Constraint::pre(format!("{}: {}", e.reference, e.detail)))
            .collect(),
        harness_id: Some(verdict.harness_id.clone()),
    })
}
