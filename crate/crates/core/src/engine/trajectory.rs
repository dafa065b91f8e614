//! The recorded artifact of one episode: every action the policy took, every
//! observation the tools returned, the deletions applied to the state, training
//! snapshots, and the per-round token trace.
//!
//! A trajectory is self-contained up to the corpus text: together with the
//! corpus it replays byte-exactly (see [`crate::engine::replay`]).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::state::{Budgets, DeletionMode, MsgId};
use crate::tools::{Observation, ToolCall, ToolName};

/// Byte range `[start, end)` into a serialized state. Loss masks are unions
/// of these; downstream trainers map bytes to their own tokenization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteRange {
    pub start: usize,
    pub end: usize,
}

impl ByteRange {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

/// How an episode ended. Anything but `Finished` is "unfinished" for reward
/// purposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Finished,
    BudgetExceeded,
    RoundsExceeded,
    ProtocolError,
}

impl EpisodeStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            EpisodeStatus::Finished => "finished",
            EpisodeStatus::BudgetExceeded => "budget_exceeded",
            EpisodeStatus::RoundsExceeded => "rounds_exceeded",
            EpisodeStatus::ProtocolError => "protocol_error",
        }
    }
}

/// The traversal strategy a trajectory claims to follow. Process filtering
/// checks linear-scan trajectories for read gaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    LinearScan,
    KeywordSearch,
}

/// What the policy did in one round: a parsed tool call, or a response that
/// could not be parsed into one (kept verbatim so replay reproduces it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Call { thought: String, call: ToolCall },
    Invalid { raw: String },
}

impl Action {
    /// Tool name for valid calls; `None` for invalid actions.
    pub fn tool(&self) -> Option<ToolName> {
        match self {
            Action::Call { call, .. } => Some(call.name),
            Action::Invalid { .. } => None,
        }
    }
}

/// A deletion the engine applied after an action's observation, with the
/// mode that was actually used (after per-target mode resolution).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deletion {
    pub msg_id: MsgId,
    pub mode: DeletionMode,
}

/// One round of the episode. `observation` is absent for `finish` (which
/// produces none) and for invalid actions (which get a corrective user
/// message instead).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEvent {
    pub round: u32,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<Observation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deletions: Vec<Deletion>,
}

/// Serialized state captured at a context-editing round, masked to the
/// assistant turn being predicted. Everything before the mask is input;
/// nothing after the mask exists (the snapshot is taken before the tool
/// observation lands).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub round: u32,
    pub serialized_state: String,
    pub loss_mask: Vec<ByteRange>,
}

/// Visible token count at the end of a round. Round 0 is the initial state
/// (system block + query) before any model turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TracePoint {
    pub round: u32,
    pub visible_tokens: usize,
}

/// Everything needed to rebuild the episode's configuration. Plain data:
/// the token counter is stored by scheme name, so externally-supplied
/// counters make a trajectory non-replayable (by design).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub budgets: Budgets,
    pub enabled_tools: Vec<ToolName>,
    pub deletion_mode: DeletionMode,
    pub counter_scheme: String,
    pub default_chunk_size: usize,
    pub search_top_k: usize,
    pub snippet_tokens: usize,
    pub system_block: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Content-derived id: identical runs get identical ids.
    pub trajectory_id: String,
    /// Grouping label for usage tables (e.g. a benchmark cell).
    pub tag: String,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golden_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_mode: Option<ScanMode>,
    pub config: ConfigSnapshot,
    pub corpus_sha256: String,
    pub status: EpisodeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    pub events: Vec<TrajectoryEvent>,
    pub snapshots: Vec<Snapshot>,
    pub token_trace: Vec<TracePoint>,
    /// Set when the policy itself died (e.g. transport failure after
    /// retries). The episode ends with `ProtocolError` status and no event
    /// for the unstarted round.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fatal: Option<String>,
    /// Hash of the final serialized state; replay equality checks use it in
    /// place of shipping the whole state text.
    pub final_state_sha256: String,
}

#[derive(Debug, thiserror::Error)]
pub enum TrajectoryIoError {
    #[error("trajectory io: {0}")]
    Io(#[from] std::io::Error),
    #[error("trajectory json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Trajectory {
    /// Count of rounds whose action called `tool`.
    pub fn calls_to(&self, tool: ToolName) -> usize {
        self.events
            .iter()
            .filter(|e| e.action.tool() == Some(tool))
            .count()
    }

    /// Total model rounds, including invalid-action rounds.
    pub fn rounds(&self) -> usize {
        self.events.len()
    }

    pub fn save(&self, path: &Path) -> Result<(), TrajectoryIoError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrajectoryIoError> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Loads every `*.json` file in `dir`, sorted by file name for a stable
    /// order.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>, TrajectoryIoError> {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths.iter().map(|p| Self::load(p)).collect()
    }
}
