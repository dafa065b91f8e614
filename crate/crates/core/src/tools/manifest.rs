//! Machine-readable tool schemas, published in the chat-completions
//! function-calling format. This document is both what remote policies
//! receive as their `tools` array and what gets appended to the system
//! block for text serialization.

use serde_json::{json, Value};

use super::{ToolName, ToolSet};

/// JSON array of function specs for every enabled tool, in canonical order.
pub fn tool_manifest(set: &ToolSet) -> Value {
    let specs: Vec<Value> = ToolName::ALL
        .iter()
        .filter(|t| set.is_enabled(**t))
        .map(|t| function_spec(*t))
        .collect();
    Value::Array(specs)
}

fn function_spec(tool: ToolName) -> Value {
    let (description, parameters) = match tool {
        ToolName::AnalyzeText => (
            "Estimates input scale: token count, size class, and expected chunk count.",
            json!({"type": "object", "properties": {}, "required": []}),
        ),
        ToolName::CheckBudget => (
            "Reports remaining interaction budget: tokens used and rounds used.",
            json!({"type": "object", "properties": {}, "required": []}),
        ),
        ToolName::BuildIndex => (
            "Builds a searchable index by chunking the attached corpus.",
            json!({
                "type": "object",
                "properties": {
                    "chunk_size": {
                        "type": "integer",
                        "minimum": 512,
                        "maximum": 12000,
                        "description": "Tokens per chunk."
                    },
                    "rebuild": {
                        "type": "boolean",
                        "description": "Replace an existing index."
                    }
                },
                "required": ["chunk_size"]
            }),
        ),
        ToolName::SearchEngine => (
            "Searches for relevant segments with a BM25 keyword query.",
            json!({
                "type": "object",
                "properties": {
                    "query": {"type": "string"},
                    "top_k": {"type": "integer", "minimum": 1}
                },
                "required": ["query"]
            }),
        ),
        ToolName::ReadChunk => (
            "Loads a selected text chunk by id. The observation reports its own msg_id; delete it once processed.",
            json!({
                "type": "object",
                "properties": {"chunk_id": {"type": "integer", "minimum": 0}},
                "required": ["chunk_id"]
            }),
        ),
        ToolName::Note => (
            "Records a key fact under a new key. The result reports msg_id(invoking_assistant) for cleanup.",
            json!({
                "type": "object",
                "properties": {"key": {"type": "string"}, "text": {"type": "string"}},
                "required": ["key", "text"]
            }),
        ),
        ToolName::UpdateNote => (
            "Updates the text stored under an existing note key.",
            json!({
                "type": "object",
                "properties": {"key": {"type": "string"}, "text": {"type": "string"}},
                "required": ["key", "text"]
            }),
        ),
        ToolName::ReadNote => (
            "Retrieves stored notes to context: one key, or all notes when key is omitted.",
            json!({
                "type": "object",
                "properties": {"key": {"type": "string", "description": "Omit or pass \"*\" for all notes."}},
                "required": []
            }),
        ),
        ToolName::DeleteContext => (
            "Removes messages from context by msg_id; they are replaced with stubs.",
            json!({
                "type": "object",
                "properties": {
                    "msg_ids": {"type": "array", "items": {"type": "integer", "minimum": 0}}
                },
                "required": ["msg_ids"]
            }),
        ),
        ToolName::Finish => (
            "Ends reasoning and outputs the final answer.",
            json!({
                "type": "object",
                "properties": {"answer": {"type": "string"}},
                "required": ["answer"]
            }),
        ),
    };
    json!({
        "type": "function",
        "function": {
            "name": tool.as_str(),
            "description": description,
            "parameters": parameters
        }
    })
}
