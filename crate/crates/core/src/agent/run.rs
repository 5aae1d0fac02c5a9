use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::backend::{BackendError, ChatRequest, ModelBackend, Reply};
use super::dispatch::{dispatch_tool_call, ToolRegistry};
use super::message::{Message, Transcript};
use super::roles::AgentRole;
use crate::tools::ToolEnv;
use crate::workspace::{ValidationReport, Workspace};

pub const VALIDATION_RETRIES: usize = 2;
pub const TRANSPORT_RETRIES: usize = 3;
/// First backoff delay in seconds; doubles per retry.
pub const BACKOFF_BASE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentStatus {
    Completed,
    /// The agent kept exiting without its artifacts.
    ValidationFailed,
    TurnsExhausted,
    BackendFailed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub transcript: Transcript,
    pub report: ValidationReport,
    pub status: AgentStatus,
}

impl AgentOutcome {
    pub fn succeeded(&self) -> bool {
        self.status == AgentStatus::Completed
    }
}

fn ask(backend: &mut dyn ModelBackend, req: &ChatRequest, env: &ToolEnv) -> Result<Reply, BackendError> {
    let mut delay = BACKOFF_BASE;
    let mut attempt = 0;
    loop {
        match backend.complete(req) {
            Err(e) if e.retryable() && attempt < TRANSPORT_RETRIES => {
                attempt += 1;
                env.clock.sleep(delay);
                delay *= 2.0;
            }
            other => return other,
        }
    }
}

/// The reason-act loop for one agent invocation. Alternates model turns and
/// tool dispatch; each time the model signals completion the workspace exit
/// check runs, and a failing check is sent back as a reminder while the
/// retry budget lasts.
pub fn run_agent_loop(
    role: &AgentRole,
    task: &str,
    backend: &mut dyn ModelBackend,
    registry: &ToolRegistry,
    env: &mut ToolEnv,
    ws: &mut Workspace,
) -> AgentOutcome {
    let specs = registry.specs(&role.allowed_tools);
    let mut t = Transcript {
        role: role.name,
        system: role.system_prompt.clone(),
        task: task.to_string(),
        messages: Vec::new(),
    };
    let mut retries = 0;
    let mut turns = 0;
    let status = loop {
        if turns >= role.max_turns {
            break AgentStatus::TurnsExhausted;
        }
        let req = ChatRequest {
            role: role.name,
            system: &t.system,
            task: &t.task,
            messages: &t.messages,
            tools: &specs,
        };
        let reply = match ask(backend, &req, env) {
            Ok(r) => r,
            Err(e) => break AgentStatus::BackendFailed(e.to_string()),
        };
        turns += 1;
        let mut calls = reply.tool_calls;
        for (i, c) in calls.iter_mut().enumerate() {
            let taken = t.messages.iter().flat_map(|m| &m.tool_calls).any(|o| o.id == c.id);
            if c.id.is_empty() || taken {
                c.id = format!("call_{turns}_{}", i + 1);
            }
        }
        t.messages.push(Message::model(reply.content, calls.clone()));
        for c in &calls {
            let result = dispatch_tool_call(c, &role.allowed_tools, registry, env);
            t.messages.push(Message::tool(result));
        }
        if reply.done {
            let report = ws.validate(role.name, env.clock.now());
            if report.passed {
                return AgentOutcome {
                    transcript: t,
                    report,
                    status: AgentStatus::Completed,
                };
            }
            if retries >= VALIDATION_RETRIES {
                ws.sandbox.acknowledge_violations();
                return AgentOutcome {
                    transcript: t,
                    report,
                    status: AgentStatus::ValidationFailed,
                };
            }
            retries += 1;
            t.messages.push(Message::system(report.reminder()));
            ws.sandbox.acknowledge_violations();
        }
    };
    let report = ws.validate(role.name, env.clock.now());
    ws.sandbox.acknowledge_violations();
    let status = match status {
        AgentStatus::TurnsExhausted if report.passed => AgentStatus::Completed,
        s => s,
    };
    AgentOutcome {
        transcript: t,
        report,
        status,
    }
}

/// Writes `logs/<seq>-<role>.json` and returns its workspace-relative path.
pub fn write_log(root: &Path, seq: usize, outcome: &AgentOutcome) -> std::io::Result<String> {
    let rel = format!("logs/{seq:03}-{}.json", outcome.transcript.role.file_stem());
    let text = serde_json::to_string_pretty(outcome).expect("outcome serializes");
    fs::create_dir_all(root.join("logs"))?;
    fs::write(root.join(&rel), text + "\n")?;
    Ok(rel)
}
