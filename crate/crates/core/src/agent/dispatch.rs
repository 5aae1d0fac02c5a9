use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};

use super::message::{ToolCall, ToolResult};
use crate::tools::{standard_tools, Args, ErrorKind, Tool, ToolEnv, ToolSpec};
use crate::util::{truncate_middle, OUTPUT_CAP};

pub struct ToolRegistry {
    tools: BTreeMap<&'static str, Box<dyn Tool>>,
}

impl Default for ToolRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

impl ToolRegistry {
    pub fn standard() -> Self {
        Self { tools: standard_tools() }
    }

    pub fn names(&self) -> BTreeSet<String> {
        self.tools.keys().map(|k| k.to_string()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&dyn Tool> {
        self.tools.get(name).map(|t| t.as_ref())
    }

    /// Specs of the allowed tools, in name order.
    pub fn specs(&self, allowed: &BTreeSet<String>) -> Vec<ToolSpec> {
        self.tools
            .iter()
            .filter(|(n, _)| allowed.contains(**n))
            .map(|(_, t)| t.spec())
            .collect()
    }
}

fn failure(call: &ToolCall, kind: ErrorKind, message: String) -> ToolResult {
    ToolResult {
        call_id: call.id.clone(),
        ok: false,
        output: truncate_middle(&message, OUTPUT_CAP),
        error_kind: Some(kind),
    }
}

/// Runs one tool call. Never fails: every problem becomes an error result.
pub fn dispatch_tool_call(
    call: &ToolCall,
    allowed: &BTreeSet<String>,
    registry: &ToolRegistry,
    env: &mut ToolEnv,
) -> ToolResult {
    let tool = match registry.get(&call.tool_name) {
        Some(t) if allowed.contains(&call.tool_name) => t,
        _ => {
            let names: Vec<&str> = allowed.iter().map(String::as_str).collect();
            return failure(
                call,
                ErrorKind::BadArguments,
                format!("tool `{}` is not available here; use one of: {}", call.tool_name, names.join(", ")),
            );
        }
    };
    let spec = tool.spec();
    let unknown: Vec<&str> = call
        .arguments
        .keys()
        .map(String::as_str)
        .filter(|k| !spec.params.iter().any(|p| p.name == *k))
        .collect();
    if !unknown.is_empty() {
        let known: Vec<&str> = spec.params.iter().map(|p| p.name).collect();
        return failure(
            call,
            ErrorKind::BadArguments,
            format!(
                "unknown argument(s) {} for {}; accepted: {}",
                unknown.join(", "),
                spec.name,
                if known.is_empty() { "none".to_string() } else { known.join(", ") }
            ),
        );
    }
    let args = Args(&call.arguments);
    match catch_unwind(AssertUnwindSafe(|| tool.call(&args, env))) {
        Ok(Ok(out)) => ToolResult {
            call_id: call.id.clone(),
            ok: true,
            output: truncate_middle(&out, OUTPUT_CAP),
            error_kind: None,
        },
        Ok(Err(f)) => failure(call, f.kind, f.message),
        Err(_) => failure(call, ErrorKind::BadArguments, format!("internal error in {}", spec.name)),
    }
}
