//! The reason-act loop: transcripts, model backends, the tool registry and
//! the Manager's agent selection.

mod backend;
mod dispatch;
mod message;
mod roles;
mod run;
mod select;

pub use backend::{
    parse_reply, parse_script, tool_schema, wire_messages, BackendError, ChatRequest, HttpBackend, ModelBackend,
    Reply, ScriptLine, ScriptedBackend,
};
pub use dispatch::{dispatch_tool_call, ToolRegistry};
pub use message::{Author, Message, ToolCall, ToolResult, Transcript};
pub use roles::{default_tools, system_prompt, AgentRole, ANALYZER_MAX_TURNS, GENERATOR_MAX_TURNS};
pub use run::{run_agent_loop, write_log, AgentOutcome, AgentStatus, BACKOFF_BASE, TRANSPORT_RETRIES, VALIDATION_RETRIES};
pub use select::{select_next_agent, FeedbackSignals};
