//! A deterministic scripted policy that works the intended tool discipline:
//! analyze, build an index, then (a) scan chunks in order or (b) search by
//! keyword, reading one chunk per round, noting planted facts, and pruning
//! what it has consumed. It parses message ids and chunk layout out of the
//! observations exactly as a model would have to.

use std::collections::VecDeque;

use serde_json::json;

use crate::engine::{Policy, PolicyFailure, PolicyStep, PolicyView, ScanMode};
use crate::state::{MsgId, Role, Visibility};
use crate::tools::{ToolCall, ToolName, ToolSet};

/// Traversal strategy for a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Read chunks 0..N-1 in order.
    LinearScan,
    /// `searchEngine` for the target key, then read the hits in rank order.
    KeywordSearch,
}

impl Strategy {
    /// The scan-mode declaration matching this traversal.
    pub fn scan_mode(&self) -> ScanMode {
        match self {
            Strategy::LinearScan => ScanMode::LinearScan,
            Strategy::KeywordSearch => ScanMode::KeywordSearch,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OraclePlan {
    pub strategy: Strategy,
    /// The key whose planted value the episode is after. Notes are written
    /// when a read chunk contains `for {key} is {value}` phrasing.
    pub target_key: String,
    pub chunk_size: usize,
    /// Truncation preset: stop reading once this many corpus tokens have
    /// been consumed and answer from whatever was noted so far. Models a
    /// policy that only ever sees a prefix of the input.
    pub scan_token_limit: Option<usize>,
}

impl OraclePlan {
    pub fn linear(target_key: impl Into<String>) -> Self {
        OraclePlan {
            strategy: Strategy::LinearScan,
            target_key: target_key.into(),
            chunk_size: 4_096,
            scan_token_limit: None,
        }
    }

    pub fn keyword(target_key: impl Into<String>) -> Self {
        OraclePlan {
            strategy: Strategy::KeywordSearch,
            ..OraclePlan::linear(target_key)
        }
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> Self {
        self.chunk_size = chunk_size;
        self
    }

    pub fn with_scan_token_limit(mut self, limit: usize) -> Self {
        self.scan_token_limit = Some(limit);
        self
    }

    /// Reads the target key out of a benchmark query shaped like
    /// `What is the special magic number for {key}?`.
    pub fn key_from_query(query: &str) -> Option<&str> {
        let rest = query.split(" for ").nth(1)?;
        let key = rest.trim_end().trim_end_matches('?');
        (!key.is_empty()).then_some(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("keyword_search plan requires the searchEngine tool, which is disabled")]
    SearchDisabled,
    #[error("plan requires tool {0:?}, which is disabled")]
    ToolDisabled(ToolName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Analyze,
    Build,
    Search,
    Read,
    Note,
    Delete,
    Finish,
}

/// See module docs. One `OraclePolicy` drives one episode.
#[derive(Debug)]
pub struct OraclePolicy {
    plan: OraclePlan,
    phase: Phase,
    queue: VecDeque<usize>,
    /// Set once the reading queue has been derived from observations.
    seeded: bool,
    /// Parsed from the build observation; the keyword strategy falls back
    /// to scanning all of these when search returns nothing.
    chunk_count: usize,
    /// Message ids scheduled for the next `deleteContext` call.
    pending_delete: Vec<MsgId>,
    /// Last few tokens of the previously read chunk. A planted sentence can
    /// straddle a chunk split; a contiguous scan re-checks the join.
    prev_tail: String,
    found_value: Option<String>,
    tokens_read: usize,
    calls_made: u32,
}

impl OraclePolicy {
    pub fn new(plan: OraclePlan, tools: &ToolSet) -> Result<Self, PlanError> {
        if plan.strategy == Strategy::KeywordSearch && !tools.is_enabled(ToolName::SearchEngine) {
            return Err(PlanError::SearchDisabled);
        }
        for required in [
            ToolName::AnalyzeText,
            ToolName::BuildIndex,
            ToolName::ReadChunk,
            ToolName::Note,
            ToolName::DeleteContext,
        ] {
            if !tools.is_enabled(required) {
                return Err(PlanError::ToolDisabled(required));
            }
        }
        Ok(OraclePolicy {
            plan,
            phase: Phase::Analyze,
            queue: VecDeque::new(),
            seeded: false,
            chunk_count: 0,
            pending_delete: Vec::new(),
            prev_tail: String::new(),
            found_value: None,
            tokens_read: 0,
            calls_made: 0,
        })
    }

    fn call(&mut self, name: ToolName, args: serde_json::Value) -> ToolCall {
        self.calls_made += 1;
        ToolCall::new(name, args, format!("call_{}", self.calls_made))
    }

    fn step_of(&mut self, thought: impl Into<String>, call: ToolCall) -> PolicyStep {
        PolicyStep {
            thought: thought.into(),
            call,
        }
    }

    fn finish_step(&mut self) -> PolicyStep {
        let answer = self.found_value.clone().unwrap_or_default();
        let thought = if self.found_value.is_some() {
            format!(
                "My notes hold the value for \"{}\"; answering from them.",
                self.plan.target_key
            )
        } else {
            "The scan is exhausted without a hit; answering with what I have.".to_string()
        };
        self.phase = Phase::Finish;
        let call = self.call(ToolName::Finish, json!({ "answer": answer }));
        self.step_of(thought, call)
    }
}

/// The newest visible tool observation, if any.
fn latest_observation<'a>(view: &'a PolicyView<'_>) -> Option<&'a str> {
    view.state
        .messages()
        .iter()
        .rev()
        .find(|m| m.role == Role::Tool && m.visibility == Visibility::Visible)
        .map(|m| m.content.as_str())
}

/// `key=value` integer fields out of observation headers, e.g. `msg_id=12`.
fn parse_field(text: &str, field: &str) -> Option<usize> {
    let at = text.find(&format!("{field}="))? + field.len() + 1;
    let rest = &text[at..];
    let end = rest
        .find(|c: char| !c.is_ascii_digit())
        .unwrap_or(rest.len());
    rest[..end].parse().ok()
}

/// All `chunk_id=N` occurrences in order (search hits arrive ranked).
fn parse_chunk_ids(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(pos) = rest.find("chunk_id=") {
        rest = &rest[pos + "chunk_id=".len()..];
        let end = rest
            .find(|c: char| !c.is_ascii_digit())
            .unwrap_or(rest.len());
        if let Ok(id) = rest[..end].parse() {
            out.push(id);
        }
    }
    out
}

/// The planted value, if `text` states one for `key`: the token following
/// `for {key} is `, up to the sentence-ending period.
fn find_planted_value(text: &str, key: &str) -> Option<String> {
    let marker = format!("for {key} is ");
    let at = text.find(&marker)? + marker.len();
    let rest = &text[at..];
    let end = rest.find(['.', '\n', ' ']).unwrap_or(rest.len());
    let value = &rest[..end];
    (!value.is_empty()).then(|| value.to_string())
}

impl Policy for OraclePolicy {
    fn step(&mut self, view: &PolicyView<'_>) -> Result<PolicyStep, PolicyFailure> {
        match self.phase {
            Phase::Analyze => {
                self.phase = Phase::Build;
                let mode = match self.plan.strategy {
                    Strategy::LinearScan => {
                        "(a) Linear scan: every chunk in order, nothing skipped"
                    }
                    Strategy::KeywordSearch => {
                        "(b) Keyword search: retrieve only chunks matching the key"
                    }
                };
                let thought = format!(
                    "Sizing the attached text first. Mode: {mode}. I will note findings and delete consumed content as I go."
                );
                let call = self.call(ToolName::AnalyzeText, json!({}));
                Ok(self.step_of(thought, call))
            }
            Phase::Build => {
                self.phase = match self.plan.strategy {
                    Strategy::LinearScan => Phase::Read,
                    Strategy::KeywordSearch => Phase::Search,
                };
                let chunk_size = self.plan.chunk_size;
                let call = self.call(ToolName::BuildIndex, json!({ "chunk_size": chunk_size }));
                Ok(self.step_of(
                    format!("Indexing the corpus at chunk_size={chunk_size}."),
                    call,
                ))
            }
            Phase::Search => {
                // The build observation tells us the id range; remember it
                // as the fallback scan if search comes up empty.
                let obs = latest_observation(view).unwrap_or_default();
                self.chunk_count = parse_built_chunk_count(obs).unwrap_or(0);
                self.phase = Phase::Read;
                let key = self.plan.target_key.clone();
                let call = self.call(ToolName::SearchEngine, json!({ "query": key }));
                Ok(self.step_of(
                    format!(
                        "Searching for \"{}\" to avoid a full scan.",
                        self.plan.target_key
                    ),
                    call,
                ))
            }
            Phase::Read => {
                if !self.seeded {
                    self.seeded = true;
                    let obs = latest_observation(view).unwrap_or_default();
                    self.queue = match self.plan.strategy {
                        Strategy::LinearScan => {
                            self.chunk_count = parse_built_chunk_count(obs).unwrap_or(0);
                            (0..self.chunk_count).collect()
                        }
                        Strategy::KeywordSearch => {
                            let hits = parse_chunk_ids(obs);
                            if hits.is_empty() {
                                (0..self.chunk_count).collect()
                            } else {
                                hits.into()
                            }
                        }
                    };
                }
                if self.budget_spent() {
                    self.queue.clear();
                }
                match self.queue.pop_front() {
                    None => Ok(self.finish_step()),
                    Some(chunk_id) => {
                        self.phase = Phase::Note;
                        let call =
                            self.call(ToolName::ReadChunk, json!({ "chunk_id": chunk_id }));
                        Ok(self.step_of(format!("Reading chunk {chunk_id}."), call))
                    }
                }
            }
            Phase::Note => {
                // The read observation: grab its msg_id for pruning and scan
                // its body for the planted value.
                let obs = latest_observation(view).unwrap_or_default().to_string();
                let read_msg = parse_field(&obs, "msg_id");
                if let Some(tokens) = parse_field(&obs, "tokens") {
                    self.tokens_read += tokens;
                }
                if let Some(id) = read_msg {
                    self.pending_delete.push(id as MsgId);
                }
                // Body = everything past the `msg_id=.. chunk_id=..` header.
                let body = obs.split_once('\n').map(|(_, b)| b).unwrap_or("");
                // Only a linear scan reads adjacent chunks, so only there is
                // the carried tail a real prefix of the current body's join.
                let glue = self.plan.strategy == Strategy::LinearScan;
                let search_space = if glue && !self.prev_tail.is_empty() {
                    format!("{} {body}", self.prev_tail)
                } else {
                    body.to_string()
                };
                if glue {
                    let words: Vec<&str> = body.split_whitespace().collect();
                    self.prev_tail = words[words.len().saturating_sub(16)..].join(" ");
                }
                match find_planted_value(&search_space, &self.plan.target_key) {
                    Some(value) if self.found_value.is_none() => {
                        self.phase = Phase::Delete;
                        self.found_value = Some(value.clone());
                        let key = self.plan.target_key.clone();
                        let call = self.call(
                            ToolName::Note,
                            json!({ "key": key, "text": value }),
                        );
                        Ok(self.step_of(
                            format!("Chunk states the value for \"{}\"; noting it.", self.plan.target_key),
                            call,
                        ))
                    }
                    _ => {
                        // Nothing worth noting: prune the chunk right away.
                        self.phase = Phase::Read;
                        let ids = std::mem::take(&mut self.pending_delete);
                        let call =
                            self.call(ToolName::DeleteContext, json!({ "msg_ids": ids }));
                        Ok(self.step_of(
                            "No relevant facts here; pruning the read content.",
                            call,
                        ))
                    }
                }
            }
            Phase::Delete => {
                // The note observation names the assistant message that
                // invoked it; prune it together with the read content.
                let obs = latest_observation(view).unwrap_or_default().to_string();
                if let Some(id) = parse_field(&obs, "msg_id(invoking_assistant)") {
                    self.pending_delete.push(id as MsgId);
                }
                self.phase = Phase::Read;
                let ids = std::mem::take(&mut self.pending_delete);
                let call = self.call(ToolName::DeleteContext, json!({ "msg_ids": ids }));
                Ok(self.step_of(
                    "Note taken; pruning the chunk and the note-construction turn.",
                    call,
                ))
            }
            Phase::Finish => Ok(self.finish_step()),
        }
    }
}

impl OraclePolicy {
    fn budget_spent(&self) -> bool {
        matches!(self.plan.scan_token_limit, Some(limit) if self.tokens_read >= limit)
    }
}

/// Chunk count out of a `buildIndex` observation (`index built: N chunks ...`).
fn parse_built_chunk_count(obs: &str) -> Option<usize> {
    obs.strip_prefix("index built: ")?
        .split(' ')
        .next()?
        .parse()
        .ok()
}
