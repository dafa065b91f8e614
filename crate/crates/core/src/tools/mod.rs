//! The tool surface exposed to policies: call/observation types, the
//! notebook, tool-set configuration, and the execution environment.
//!
//! Ten tools exist. `finish` is always available; every other tool can be
//! removed from a [`ToolSet`] (ablations disable `searchEngine`, for
//! example). Execution is synchronous and deterministic given the same
//! corpus, configuration, and call sequence.

mod exec;
mod manifest;
mod notebook;

pub use exec::{ExecOutput, SearchDefaults, ToolEnv};
pub use manifest::tool_manifest;
pub use notebook::{Notebook, NoteEntry};

use serde::{Deserialize, Serialize};

use crate::state::{DeletionMode, MsgId};

/// Wire-level tool identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ToolName {
    #[serde(rename = "analyzeText")]
    AnalyzeText,
    #[serde(rename = "checkBudget")]
    CheckBudget,
    #[serde(rename = "buildIndex")]
    BuildIndex,
    #[serde(rename = "searchEngine")]
    SearchEngine,
    #[serde(rename = "readChunk")]
    ReadChunk,
    #[serde(rename = "note")]
    Note,
    #[serde(rename = "updateNote")]
    UpdateNote,
    #[serde(rename = "readNote")]
    ReadNote,
    #[serde(rename = "deleteContext")]
    DeleteContext,
    #[serde(rename = "finish")]
    Finish,
}

impl ToolName {
    pub const ALL: [ToolName; 10] = [
        ToolName::AnalyzeText,
        ToolName::CheckBudget,
        ToolName::BuildIndex,
        ToolName::SearchEngine,
        ToolName::ReadChunk,
        ToolName::Note,
        ToolName::UpdateNote,
        ToolName::ReadNote,
        ToolName::DeleteContext,
        ToolName::Finish,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ToolName::AnalyzeText => "analyzeText",
            ToolName::CheckBudget => "checkBudget",
            ToolName::BuildIndex => "buildIndex",
            ToolName::SearchEngine => "searchEngine",
            ToolName::ReadChunk => "readChunk",
            ToolName::Note => "note",
            ToolName::UpdateNote => "updateNote",
            ToolName::ReadNote => "readNote",
            ToolName::DeleteContext => "deleteContext",
            ToolName::Finish => "finish",
        }
    }

    pub fn parse(name: &str) -> Option<ToolName> {
        Self::ALL.iter().copied().find(|t| t.as_str() == name)
    }

    /// Tools that edit what later serializations contain (notebook writes and
    /// deletions). Snapshot capture keys off this set.
    pub fn is_context_editing(&self) -> bool {
        matches!(
            self,
            ToolName::Note | ToolName::UpdateNote | ToolName::DeleteContext
        )
    }
}

impl std::fmt::Display for ToolName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One tool invocation as produced by a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: ToolName,
    /// JSON object of arguments. Keys serialize in sorted order, which keeps
    /// rendering deterministic regardless of what a server sent.
    #[serde(default)]
    pub args: serde_json::Value,
    pub call_id: String,
}

impl ToolCall {
    pub fn new(name: ToolName, args: serde_json::Value, call_id: impl Into<String>) -> Self {
        ToolCall {
            name,
            args,
            call_id: call_id.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsStatus {
    Ok,
    Error,
}

/// Result of executing one tool call, fed back to the policy as a tool
/// message. `content` is exactly what the policy sees; error contents always
/// start with `error={Code}:` so failures stay machine-readable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub call_id: String,
    pub status: ObsStatus,
    pub content: String,
    /// The msg_id the observation message itself was appended under.
    pub produced_msg_id: MsgId,
    /// Tool-specific message references: for `note`/`updateNote` the invoking
    /// assistant message, for `deleteContext` the ids actually stubbed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub referenced_msg_ids: Vec<MsgId>,
}

/// Typed failure carried inside an error observation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ToolError {
    #[error("error=EmptyCorpus: no corpus text is attached")]
    EmptyCorpus,
    #[error("error=IndexAlreadyBuilt: an index exists; pass rebuild=true to replace it")]
    IndexAlreadyBuilt,
    #[error("error=NoIndex: call buildIndex before this tool")]
    NoIndex,
    #[error("error=ToolDisabled: {0} is not available in this episode")]
    ToolDisabled(ToolName),
    #[error("error=UnknownChunk: chunk_id {0} does not exist")]
    UnknownChunk(usize),
    #[error("error=DuplicateKey: note \"{0}\" already exists; use updateNote")]
    DuplicateKey(String),
    #[error("error=UnknownKey: note \"{0}\" does not exist")]
    UnknownKey(String),
    #[error("error=InvalidArgs: {0}")]
    InvalidArgs(String),
}

impl ToolError {
    pub fn code(&self) -> &'static str {
        match self {
            ToolError::EmptyCorpus => "EmptyCorpus",
            ToolError::IndexAlreadyBuilt => "IndexAlreadyBuilt",
            ToolError::NoIndex => "NoIndex",
            ToolError::ToolDisabled(_) => "ToolDisabled",
            ToolError::UnknownChunk(_) => "UnknownChunk",
            ToolError::DuplicateKey(_) => "DuplicateKey",
            ToolError::UnknownKey(_) => "UnknownKey",
            ToolError::InvalidArgs(_) => "InvalidArgs",
        }
    }

    /// Schema and argument mistakes are policy protocol errors; state-dependent
    /// failures (no index yet, unknown key, ...) are legitimate outcomes a
    /// policy may probe for and recover from.
    pub fn is_protocol_error(&self) -> bool {
        matches!(self, ToolError::InvalidArgs(_))
    }
}

/// Which tools an episode exposes, and how deletions behave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSet {
    enabled: Vec<ToolName>,
    pub deletion_mode: DeletionMode,
}

impl ToolSet {
    /// All ten tools, full deletion.
    pub fn full() -> Self {
        ToolSet {
            enabled: ToolName::ALL.to_vec(),
            deletion_mode: DeletionMode::Full,
        }
    }

    /// The search-less configuration used for forced linear scans.
    pub fn without_search() -> Self {
        let mut set = Self::full();
        set.remove(ToolName::SearchEngine);
        set
    }

    /// Rebuilds a set from recorded parts (e.g. a trajectory's config
    /// snapshot). `finish` is re-added if absent.
    pub fn from_parts(enabled: Vec<ToolName>, deletion_mode: DeletionMode) -> Self {
        let mut enabled = enabled;
        if !enabled.contains(&ToolName::Finish) {
            enabled.push(ToolName::Finish);
        }
        ToolSet {
            enabled,
            deletion_mode,
        }
    }

    pub fn with_deletion_mode(mut self, mode: DeletionMode) -> Self {
        self.deletion_mode = mode;
        self
    }

    /// Removes a tool. `finish` is the one tool that cannot be removed: an
    /// episode with no terminal action could never end well-formed.
    pub fn remove(&mut self, tool: ToolName) {
        if tool == ToolName::Finish {
            return;
        }
        self.enabled.retain(|t| *t != tool);
    }

    pub fn is_enabled(&self, tool: ToolName) -> bool {
        self.enabled.contains(&tool)
    }

    pub fn enabled(&self) -> &[ToolName] {
        &self.enabled
    }
}

impl Default for ToolSet {
    fn default() -> Self {
        Self::full()
    }
}
