//! Model backends: a scripted mock for offline runs and an HTTP client for
//! OpenAI-compatible chat endpoints.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use super::message::{Author, Message, ToolCall};
use crate::tools::ToolSpec;
use crate::Role;

pub struct ChatRequest<'a> {
    pub role: Role,
    pub system: &'a str,
    pub task: &'a str,
    pub messages: &'a [Message],
    pub tools: &'a [ToolSpec],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub content: String,
    pub tool_calls: Vec<ToolCall>,
    /// The model signalled that it considers its work finished.
    pub done: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    /// Worth retrying: connection problems, rate limits, server errors.
    #[error("backend transport error: {0}")]
    Transport(String),
    #[error("backend protocol error: {0}")]
    Protocol(String),
    #[error("mock script for {0} has no more turns")]
    ScriptExhausted(Role),
    #[error("mock script {path} line {line}: {reason}")]
    Script { path: String, line: usize, reason: String },
}

impl BackendError {
    pub fn retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

pub trait ModelBackend: Send {
    fn complete(&mut self, req: &ChatRequest) -> Result<Reply, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptLine {
    Call { tool: String, args: BTreeMap<String, String> },
    Say(String),
    Done(String),
}

fn unescape(s: &str) -> Result<String, String> {
    let mut out = String::new();
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('\\') => out.push('\\'),
            Some('"') => out.push('"'),
            Some('@') => out.push('@'),
            other => return Err(format!("unknown escape \\{}", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}

/// Splits `k=v k2="quoted value"` into pairs. Bare values starting with `@`
/// name a file, read relative to `base`.
fn parse_args(text: &str, base: &Path) -> Result<BTreeMap<String, String>, String> {
    let mut args = BTreeMap::new();
    let mut rest = text.trim_start();
    while !rest.is_empty() {
        let eq = rest.find('=').ok_or_else(|| format!("expected key=value near `{rest}`"))?;
        let key = &rest[..eq];
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(format!("bad argument name `{key}`"));
        }
        rest = &rest[eq + 1..];
        let value = if let Some(body) = rest.strip_prefix('"') {
            let mut end = None;
            let mut escaped = false;
            for (i, c) in body.char_indices() {
                match (escaped, c) {
                    (true, _) => escaped = false,
                    (false, '\\') => escaped = true,
                    (false, '"') => {
                        end = Some(i);
                        break;
                    }
                    _ => {}
                }
            }
            let end = end.ok_or_else(|| format!("unterminated quote for `{key}`"))?;
            let v = unescape(&body[..end])?;
            rest = &body[end + 1..];
            v
        } else {
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            let raw = &rest[..end];
            rest = &rest[end..];
            match raw.strip_prefix('@') {
                Some(file) => fs::read_to_string(base.join(file)).map_err(|e| format!("{file}: {e}"))?,
                None => unescape(raw)?,
            }
        };
        if args.insert(key.to_string(), value).is_some() {
            return Err(format!("argument `{key}` given twice"));
        }
        if !rest.is_empty() && !rest.starts_with(char::is_whitespace) {
            return Err(format!("expected whitespace after `{key}`"));
        }
        rest = rest.trim_start();
    }
    Ok(args)
}

/// Parses a mock script: one model turn per line, `CALL <tool> k=v ...`,
/// `SAY <text>` or `DONE [text]`. Blank lines and `#` comments are skipped.
pub fn parse_script(text: &str, path: &str, base: &Path) -> Result<Vec<ScriptLine>, BackendError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let err = |reason: String| BackendError::Script {
            path: path.to_string(),
            line: i + 1,
            reason,
        };
        let (verb, rest) = t.split_once(char::is_whitespace).unwrap_or((t, ""));
        let parsed = match verb {
            "DONE" => ScriptLine::Done(rest.trim().to_string()),
            "SAY" => ScriptLine::Say(unescape(rest.trim()).map_err(err)?),
            "CALL" => {
                let rest = rest.trim();
                let (tool, args) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
                if tool.is_empty() {
                    return Err(err("CALL needs a tool name".into()));
                }
                ScriptLine::Call {
                    tool: tool.to_string(),
                    args: parse_args(args, base).map_err(err)?,
                }
            }
            other => return Err(err(format!("unknown verb `{other}` (use CALL, SAY or DONE)"))),
        };
        out.push(parsed);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
struct Tape {
    lines: Vec<ScriptLine>,
    pos: usize,
}

/// Replays scripted turns. Each role reads its own tape, or a shared tape
/// when no role-specific one exists; every model turn consumes one line.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    tapes: BTreeMap<Role, Tape>,
    shared: Option<Tape>,
}

impl ScriptedBackend {
    pub fn from_lines(role: Role, lines: Vec<ScriptLine>) -> Self {
        let mut b = Self::default();
        b.tapes.insert(role, Tape { lines, pos: 0 });
        b
    }

    pub fn shared(lines: Vec<ScriptLine>) -> Self {
        Self {
            tapes: BTreeMap::new(),
            shared: Some(Tape { lines, pos: 0 }),
        }
    }

    /// A directory holds `<role>.script` files (`library_builder.script`, ...);
    /// a file is one shared tape.
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|e| BackendError::Script {
                path: p.display().to_string(),
                line: 0,
                reason: e.to_string(),
            })
        };
        if path.is_dir() {
            let mut b = Self::default();
            for role in Role::ALL {
                let p = path.join(format!("{}.script", role.file_stem()));
                if p.is_file() {
                    let lines = parse_script(&read(&p)?, &p.display().to_string(), path)?;
                    b.tapes.insert(role, Tape { lines, pos: 0 });
                }
            }
            Ok(b)
        } else {
            let base: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok(Self::shared(parse_script(&read(path)?, &path.display().to_string(), &base)?))
        }
    }

    /// Turns left for `role`.
    pub fn remaining(&self, role: Role) -> usize {
        self.tapes
            .get(&role)
            .or(self.shared.as_ref())
            .map_or(0, |t| t.lines.len() - t.pos)
    }
}

impl ModelBackend for ScriptedBackend {
    fn complete(&mut self, req: &ChatRequest) -> Result<Reply, BackendError> {
        let tape = match self.tapes.get_mut(&req.role) {
            Some(t) => t,
            None => self.shared.as_mut().ok_or(BackendError::ScriptExhausted(req.role))?,
        };
        let line = tape.lines.get(tape.pos).cloned().ok_or(BackendError::ScriptExhausted(req.role))?;
        tape.pos += 1;
        Ok(match line {
            ScriptLine::Call { tool, args } => Reply {
                content: String::new(),
                tool_calls: vec![ToolCall {
                    id: String::new(),
                    tool_name: tool,
                    arguments: args,
                }],
                done: false,
            },
            ScriptLine::Say(text) => Reply {
                content: text,
                tool_calls: Vec::new(),
                done: false,
            },
            ScriptLine::Done(text) => Reply {
                content: if text.is_empty() { "DONE".into() } else { text },
                tool_calls: Vec::new(),
                done: true,
            },
        })
    }
}

/// Client for an OpenAI-compatible `/chat/completions` endpoint. A reply
/// without tool calls ends the agent's turn sequence.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub timeout_s: u64,
    pub temperature: f64,
}

pub fn tool_schema(spec: &ToolSpec) -> Value {
    let props: serde_json::Map<String, Value> = spec
        .params
        .iter()
        .map(|p| (p.name.to_string(), json!({"type": "string", "description": p.description})))
        .collect();
    let required: Vec<&str> = spec.params.iter().filter(|p| p.required).map(|p| p.name).collect();
    json!({
        "type": "function",
        "function": {
            "name": spec.name,
            "description": spec.description,
            "parameters": {"type": "object", "properties": props, "required": required},
        }
    })
}

/// Wire messages for a request.
pub fn wire_messages(req: &ChatRequest) -> Vec<Value> {
    let mut out = vec![
        json!({"role": "system", "content": req.system}),
        json!({"role": "user", "content": req.task}),
    ];
    for m in req.messages {
        out.push(match m.author {
            Author::System => json!({"role": "user", "content": m.content}),
            Author::Tool => json!({
                "role": "tool",
                "tool_call_id": m.tool_result_of.clone().unwrap_or_default(),
                "content": m.content,
            }),
            Author::Model if m.tool_calls.is_empty() => json!({"role": "assistant", "content": m.content}),
            Author::Model => json!({
                "role": "assistant",
                "content": if m.content.is_empty() { Value::Null } else { Value::String(m.content.clone()) },
                "tool_calls": m.tool_calls.iter().map(|c| json!({
                    "id": c.id,
                    "type": "function",
                    "function": {
                        "name": c.tool_name,
                        "arguments": serde_json::to_string(&c.arguments).expect("string map serializes"),
                    },
                })).collect::<Vec<_>>(),
            }),
        });
    }
    out
}

/// Parses a chat-completions response body.
pub fn parse_reply(body: &Value) -> Result<Reply, BackendError> {
    let msg = body
        .pointer("/choices/0/message")
        .ok_or_else(|| BackendError::Protocol("response has no choices[0].message".into()))?;
    let content = msg.get("content").and_then(Value::as_str).unwrap_or("").to_string();
    let mut calls = Vec::new();
    for c in msg.get("tool_calls").and_then(Value::as_array).into_iter().flatten() {
        let name = c
            .pointer("/function/name")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::Protocol("tool call without a function name".into()))?;
        let raw_args = c.pointer("/function/arguments").and_then(Value::as_str).unwrap_or("{}");
        let parsed: Value = serde_json::from_str(if raw_args.trim().is_empty() { "{}" } else { raw_args })
            .map_err(|e| BackendError::Protocol(format!("arguments of {name} are not JSON: {e}")))?;
        let mut arguments = BTreeMap::new();
        for (k, v) in parsed.as_object().into_iter().flatten() {
            let s = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            arguments.insert(k.clone(), s);
        }
        calls.push(ToolCall {
            id: c.get("id").and_then(Value::as_str).unwrap_or("").to_string(),
            tool_name: name.to_string(),
            arguments,
        });
    }
    let done = calls.is_empty();
    Ok(Reply {
        content,
        tool_calls: calls,
        done,
    })
}

impl ModelBackend for HttpBackend {
    fn complete(&mut self, req: &ChatRequest) -> Result<Reply, BackendError> {
        let body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": wire_messages(req),
            "tools": req.tools.iter().map(tool_schema).collect::<Vec<_>>(),
        });
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(self.timeout_s))
            .build();
        let mut r = agent.post(&self.endpoint).set("Content-Type", "application/json");
        if let Some(key) = self.api_key_env.as_deref().and_then(|v| std::env::var(v).ok()) {
            r = r.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = r.send_json(body).map_err(|e| match e {
            ureq::Error::Status(code, resp) if code == 429 || code >= 500 => {
                BackendError::Transport(format!("HTTP {code}: {}", resp.into_string().unwrap_or_default()))
            }
            ureq::Error::Status(code, resp) => {
                BackendError::Protocol(format!("HTTP {code}: {}", resp.into_string().unwrap_or_default()))
            }
            ureq::Error::Transport(t) => BackendError::Transport(t.to_string()),
        })?;
        let value: Value = resp
            .into_json()
            .map_err(|e| BackendError::Transport(format!("reading response: {e}")))?;
        parse_reply(&value)
    }
}
