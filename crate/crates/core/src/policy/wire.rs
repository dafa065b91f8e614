//! Chat-completions wire mapping: interaction state out to the JSON message
//! list, model responses back in as policy steps. Stubbed messages travel as
//! their stub text in the original position, so the server-side view matches
//! what the local serialization shows.

use serde_json::{json, Value};

use crate::engine::{PolicyFailure, PolicyStep};
use crate::state::{InteractionState, MsgId, Role, Visibility};
use crate::tools::{ToolCall, ToolName};

/// A parsed wire message; the decoded form of one entry of [`to_wire`]'s
/// output.
#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub role: Role,
    pub content: String,
    /// Absent only on the leading system message.
    pub msg_id: Option<MsgId>,
    pub tool_calls: Vec<ToolCall>,
    pub tool_call_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("wire message {index}: {reason}")]
    Malformed { index: usize, reason: String },
}

/// Serializes the visible state as a chat message list. Every message keeps
/// its `msg_id` so the model can name deletion targets; deleted messages
/// appear as their stubs.
pub fn to_wire(state: &InteractionState, system_block: &str) -> Value {
    let mut out = vec![json!({
        "role": "system",
        "content": system_block,
    })];
    for msg in state.messages() {
        let mut obj = serde_json::Map::new();
        obj.insert("role".into(), json!(msg.role.as_str()));
        obj.insert("msg_id".into(), json!(msg.msg_id));
        match msg.visibility {
            Visibility::Stubbed => {
                let stub = msg.stub_text.as_deref().unwrap_or("[deleted msg ?]");
                obj.insert("content".into(), json!(stub));
            }
            Visibility::Visible | Visibility::ToolcallsStubbed => {
                obj.insert("content".into(), json!(msg.content));
                if msg.visibility == Visibility::Visible && !msg.tool_calls.is_empty() {
                    let calls: Vec<Value> = msg
                        .tool_calls
                        .iter()
                        .map(|c| {
                            json!({
                                "id": c.call_id,
                                "type": "function",
                                "function": {
                                    "name": c.name.as_str(),
                                    "arguments": c.args.to_string(),
                                },
                            })
                        })
                        .collect();
                    obj.insert("tool_calls".into(), Value::Array(calls));
                }
            }
        }
        if msg.role == Role::Tool {
            if let Some(call_id) = &msg.call_id {
                obj.insert("tool_call_id".into(), json!(call_id));
            }
        }
        out.push(Value::Object(obj));
    }
    Value::Array(out)
}

fn parse_role(s: &str) -> Option<Role> {
    match s {
        "system" => Some(Role::System),
        "user" => Some(Role::User),
        "assistant" => Some(Role::Assistant),
        "tool" => Some(Role::Tool),
        _ => None,
    }
}

/// Parses one tool-call object (`{"id", "type", "function": {"name",
/// "arguments"}}`). Arguments may be a JSON string or an inline object.
fn parse_tool_call(v: &Value, fallback_id: &str) -> Result<ToolCall, String> {
    let func = v.get("function").unwrap_or(v);
    let name_str = func
        .get("name")
        .and_then(Value::as_str)
        .ok_or("tool call without a function name")?;
    let name = ToolName::parse(name_str).ok_or_else(|| format!("unknown tool {name_str:?}"))?;
    let args = match func.get("arguments") {
        None | Some(Value::Null) => json!({}),
        Some(Value::String(s)) => {
            serde_json::from_str(s).map_err(|e| format!("arguments not valid JSON: {e}"))?
        }
        Some(other) => other.clone(),
    };
    let call_id = v
        .get("id")
        .and_then(Value::as_str)
        .unwrap_or(fallback_id)
        .to_string();
    Ok(ToolCall {
        name,
        args,
        call_id,
    })
}

/// Decodes a message list produced by [`to_wire`] (or an equivalent client).
pub fn from_wire(wire: &Value) -> Result<Vec<WireMessage>, WireError> {
    let items = wire.as_array().ok_or(WireError::Malformed {
        index: 0,
        reason: "message list is not an array".into(),
    })?;
    let mut out = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let fail = |reason: &str| WireError::Malformed {
            index,
            reason: reason.into(),
        };
        let role_str = item
            .get("role")
            .and_then(Value::as_str)
            .ok_or_else(|| fail("missing role"))?;
        let role = parse_role(role_str).ok_or_else(|| fail("unknown role"))?;
        let content = item
            .get("content")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let msg_id = item.get("msg_id").and_then(Value::as_u64);
        let mut tool_calls = Vec::new();
        if let Some(calls) = item.get("tool_calls").and_then(Value::as_array) {
            for (i, c) in calls.iter().enumerate() {
                tool_calls.push(
                    parse_tool_call(c, &format!("call_wire_{index}_{i}"))
                        .map_err(|reason| WireError::Malformed { index, reason })?,
                );
            }
        }
        let tool_call_id = item
            .get("tool_call_id")
            .and_then(Value::as_str)
            .map(str::to_string);
        out.push(WireMessage {
            role,
            content,
            msg_id,
            tool_calls,
            tool_call_id,
        });
    }
    Ok(out)
}

/// Extracts `(thought, call)` from a chat-completions response body.
/// Anything that is not exactly one well-formed tool call is `Malformed`,
/// with the offending message kept verbatim for the trajectory.
pub fn parse_completion(body: &Value, fallback_call_id: &str) -> Result<PolicyStep, PolicyFailure> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| PolicyFailure::Malformed {
            raw: body.to_string(),
        })?;
    let raw = || message.to_string();
    let thought = message
        .get("content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let calls = message
        .get("tool_calls")
        .and_then(Value::as_array)
        .cloned()
        .unwrap_or_default();
    if calls.len() != 1 {
        // Zero calls: the model answered in prose. Several: ambiguous —
        // the protocol demands exactly one action per round.
        return Err(PolicyFailure::Malformed { raw: raw() });
    }
    let call = parse_tool_call(&calls[0], fallback_call_id)
        .map_err(|_| PolicyFailure::Malformed { raw: raw() })?;
    Ok(PolicyStep { thought, call })
}
