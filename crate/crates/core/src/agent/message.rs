use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::tools::ErrorKind;
use crate::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Author {
    System,
    Model,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub tool_name: String,
    pub arguments: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub call_id: String,
    pub ok: bool,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<ErrorKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub author: Author,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_result_of: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<ErrorKind>,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            author: Author::System,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_result_of: None,
            error_kind: None,
        }
    }

    pub fn model(content: impl Into<String>, tool_calls: Vec<ToolCall>) -> Self {
        Self {
            author: Author::Model,
            content: content.into(),
            tool_calls,
            tool_result_of: None,
            error_kind: None,
        }
    }

    pub fn tool(result: ToolResult) -> Self {
        Self {
            author: Author::Tool,
            content: result.output,
            tool_calls: Vec::new(),
            tool_result_of: Some(result.call_id),
            error_kind: result.error_kind,
        }
    }

    pub fn as_result(&self) -> Option<ToolResult> {
        let call_id = self.tool_result_of.clone()?;
        Some(ToolResult {
            call_id,
            ok: self.error_kind.is_none(),
            output: self.content.clone(),
            error_kind: self.error_kind,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub role: Role,
    pub system: String,
    pub task: String,
    pub messages: Vec<Message>,
}

impl Transcript {
    pub fn model_turns(&self) -> usize {
        self.messages.iter().filter(|m| m.author == Author::Model).count()
    }

    /// Every call has exactly one result, placed after it, and only model
    /// messages carry calls.
    pub fn check_well_formed(&self) -> Result<(), String> {
        let mut open: Vec<&str> = Vec::new();
        let mut seen: Vec<&str> = Vec::new();
        for (i, m) in self.messages.iter().enumerate() {
            if !m.tool_calls.is_empty() && m.author != Author::Model {
                return Err(format!("message {i}: tool calls on a {:?} message", m.author));
            }
            if m.tool_result_of.is_some() != (m.author == Author::Tool) {
                return Err(format!("message {i}: result reference on a {:?} message", m.author));
            }
            for c in &m.tool_calls {
                if seen.contains(&c.id.as_str()) {
                    return Err(format!("message {i}: duplicate call id {}", c.id));
                }
                seen.push(&c.id);
                open.push(&c.id);
            }
            if let Some(id) = &m.tool_result_of {
                match open.iter().position(|o| o == id) {
                    Some(p) => {
                        open.remove(p);
                    }
                    None => return Err(format!("message {i}: result for unknown or answered call {id}")),
                }
            }
        }
        match open.first() {
            Some(id) => Err(format!("call {id} has no result")),
            None => Ok(()),
        }
    }
}
