//! The evolutionary scheduler: phase driving, coverage strategies, crash
//! feedback routing and guidance for the harness generator.

mod guidance;
mod routing;
mod scheduler;
mod strategy;

pub use guidance::{
    crash_fix_guidance, ApiCluster, Constraint, ConstraintKind, GuidanceDraft, GuidanceKind,
    GuidanceRejection, GuidanceRequest, HarnessGuidance,
};
pub use routing::{route_crash_feedback, FeedbackLedger, NextAction, MAX_HARNESS_FIX_ROUNDS, MAX_REQUEUES};
pub use strategy::{
    choose_strategy, deep_request, strategy_for_ratio, surface_clusters, surface_request, Strategy,
    DEFAULT_STRATEGY_THRESHOLD,
};
pub use scheduler::{
    recorded_crash_groups, triage_pending,
    run_end_to_end, AgentRun, CampaignSummary, Evolution, EvolutionBudget, EvolutionError, Summary, VerdictSummary,
    MAX_CONSECUTIVE_FAILURES, SUMMARY_PATH,
};
