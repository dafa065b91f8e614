//! Environment-side tool execution.
//!
//! `ToolEnv` owns everything a tool can touch besides the message state: the
//! corpus, the (optional) chunk index, and the notebook. Execution never
//! mutates the `InteractionState` directly; it returns the observation
//! content plus any deletions for the episode engine to apply in order
//! (assistant message, then observation, then deletions).

use std::sync::Arc;

use serde_json::Value;

use crate::counter::TokenCounter;
use crate::index::{ChunkIndex, IndexCache, IndexError, CHUNK_SIZE_RANGE};
use crate::state::{DeletionMode, InteractionState, MsgId, Role, Visibility};

use super::{Notebook, ObsStatus, ToolCall, ToolError, ToolName, ToolSet};

/// Corpus size class boundary: at most this many tokens counts as "short".
pub const SHORT_CORPUS_TOKENS: usize = 8_192;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchDefaults {
    pub top_k: usize,
    pub snippet_tokens: usize,
}

impl Default for SearchDefaults {
    fn default() -> Self {
        SearchDefaults {
            top_k: 5,
            snippet_tokens: 200,
        }
    }
}

/// What one execution produced. The engine turns `Obs` into a tool message
/// and applies `deletions` afterwards; `Finish` ends the episode with no
/// observation at all.
#[derive(Debug, Clone, PartialEq)]
pub enum ExecOutput {
    Obs {
        status: ObsStatus,
        content: String,
        referenced_msg_ids: Vec<MsgId>,
        deletions: Vec<(MsgId, DeletionMode)>,
        /// True for schema/argument mistakes: these count toward the
        /// consecutive-protocol-error abort, state-dependent errors do not.
        protocol_error: bool,
    },
    Finish {
        answer: String,
    },
}

impl ExecOutput {
    fn ok(content: String) -> Self {
        ExecOutput::Obs {
            status: ObsStatus::Ok,
            content,
            referenced_msg_ids: Vec::new(),
            deletions: Vec::new(),
            protocol_error: false,
        }
    }

    fn err(e: ToolError) -> Self {
        ExecOutput::Obs {
            status: ObsStatus::Error,
            content: e.to_string(),
            referenced_msg_ids: Vec::new(),
            deletions: Vec::new(),
            protocol_error: e.is_protocol_error(),
        }
    }

    fn with_refs(mut self, refs: Vec<MsgId>) -> Self {
        if let ExecOutput::Obs {
            referenced_msg_ids, ..
        } = &mut self
        {
            *referenced_msg_ids = refs;
        }
        self
    }
}

#[derive(Debug, Clone)]
pub struct ToolEnv {
    corpus: Arc<str>,
    corpus_tokens: usize,
    counter: TokenCounter,
    tool_set: ToolSet,
    chunk_size: usize,
    search: SearchDefaults,
    index: Option<Arc<ChunkIndex>>,
    notebook: Notebook,
    cache: Option<Arc<IndexCache>>,
}

impl ToolEnv {
    pub fn new(corpus: impl Into<Arc<str>>, counter: TokenCounter, tool_set: ToolSet) -> Self {
        let corpus: Arc<str> = corpus.into();
        let corpus_tokens = counter.count(&corpus);
        ToolEnv {
            corpus,
            corpus_tokens,
            counter,
            tool_set,
            chunk_size: 4_096,
            search: SearchDefaults::default(),
            index: None,
            notebook: Notebook::default(),
            cache: None,
        }
    }

    pub fn with_search_defaults(mut self, search: SearchDefaults) -> Self {
        self.search = search;
        self
    }

    pub fn with_default_chunk_size(mut self, chunk_size: usize) -> Self {
        self.chunk_size = chunk_size;
        self
    }

    /// Episodes sharing a cache reuse one immutable index per
    /// (corpus, chunk_size, counter) triple.
    pub fn with_index_cache(mut self, cache: Arc<IndexCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn corpus(&self) -> &Arc<str> {
        &self.corpus
    }

    pub fn notebook(&self) -> &Notebook {
        &self.notebook
    }

    pub fn tool_set(&self) -> &ToolSet {
        &self.tool_set
    }

    pub fn index(&self) -> Option<&Arc<ChunkIndex>> {
        self.index.as_ref()
    }

    /// Executes one call against the current state. `invoking` is the
    /// assistant message carrying the call (already appended); `produced` is
    /// the id the observation message will receive.
    pub fn execute(
        &mut self,
        state: &InteractionState,
        system_block: &str,
        call: &ToolCall,
        invoking: MsgId,
        produced: MsgId,
    ) -> ExecOutput {
        if !self.tool_set.is_enabled(call.name) {
            return ExecOutput::err(ToolError::ToolDisabled(call.name));
        }
        let args = match Args::parse(&call.args) {
            Ok(a) => a,
            Err(e) => return ExecOutput::err(e),
        };
        match call.name {
            ToolName::AnalyzeText => self.analyze_text(),
            ToolName::CheckBudget => self.check_budget(state, system_block),
            ToolName::BuildIndex => self.build_index(&args),
            ToolName::SearchEngine => self.search_engine(&args),
            ToolName::ReadChunk => self.read_chunk(&args, produced),
            ToolName::Note => self.note(&args, state.round(), invoking),
            ToolName::UpdateNote => self.update_note(&args, state.round(), invoking),
            ToolName::ReadNote => self.read_note(&args),
            ToolName::DeleteContext => self.delete_context(&args, state, produced),
            ToolName::Finish => match args.opt_str("answer") {
                Ok(answer) => ExecOutput::Finish {
                    answer: answer.unwrap_or_default(),
                },
                Err(e) => ExecOutput::err(e),
            },
        }
    }

    fn analyze_text(&self) -> ExecOutput {
        let tokens = self.corpus_tokens;
        let class = if tokens == 0 {
            "empty"
        } else if tokens <= SHORT_CORPUS_TOKENS {
            "short"
        } else {
            "long"
        };
        let chunk_estimate = tokens.div_ceil(self.chunk_size);
        ExecOutput::ok(format!(
            "size_class={class} tokens={tokens} chunk_estimate={chunk_estimate} chunk_size={}",
            self.chunk_size
        ))
    }

    fn check_budget(&self, state: &InteractionState, system_block: &str) -> ExecOutput {
        let budgets = state.budgets();
        let used = state.visible_tokens(&self.counter, system_block);
        let rounds = state.round();
        let remaining = budgets.rounds_budget.saturating_sub(rounds);
        ExecOutput::ok(format!(
            "tokens_used={used}/{} rounds_used={rounds}/{} rounds_remaining={remaining}",
            budgets.token_budget, budgets.rounds_budget
        ))
    }

    fn build_index(&mut self, args: &Args) -> ExecOutput {
        let chunk_size = match args.req_usize("chunk_size") {
            Ok(v) => v,
            Err(e) => return ExecOutput::err(e),
        };
        let rebuild = match args.opt_bool("rebuild") {
            Ok(v) => v.unwrap_or(false),
            Err(e) => return ExecOutput::err(e),
        };
        if !CHUNK_SIZE_RANGE.contains(&chunk_size) {
            return ExecOutput::err(ToolError::InvalidArgs(format!(
                "chunk_size {chunk_size} outside permitted range 512..=12000"
            )));
        }
        if self.corpus_tokens == 0 {
            return ExecOutput::err(ToolError::EmptyCorpus);
        }
        if self.index.is_some() && !rebuild {
            return ExecOutput::err(ToolError::IndexAlreadyBuilt);
        }
        let built = match &self.cache {
            Some(cache) => cache.get_or_build(&self.corpus, chunk_size, &self.counter),
            None => {
                ChunkIndex::build(Arc::clone(&self.corpus), chunk_size, &self.counter).map(Arc::new)
            }
        };
        match built {
            Ok(index) => {
                let n = index.chunks().len();
                self.chunk_size = chunk_size;
                self.index = Some(index);
                ExecOutput::ok(format!(
                    "index built: {n} chunks (ids 0..={}), chunk_size={chunk_size}",
                    n.saturating_sub(1)
                ))
            }
            Err(IndexError::EmptyCorpus) => ExecOutput::err(ToolError::EmptyCorpus),
            Err(e) => ExecOutput::err(ToolError::InvalidArgs(e.to_string())),
        }
    }

    fn search_engine(&self, args: &Args) -> ExecOutput {
        let query = match args.req_str("query") {
            Ok(q) => q,
            Err(e) => return ExecOutput::err(e),
        };
        let top_k = match args.opt_usize("top_k") {
            Ok(v) => v.unwrap_or(self.search.top_k),
            Err(e) => return ExecOutput::err(e),
        };
        if top_k == 0 {
            return ExecOutput::err(ToolError::InvalidArgs("top_k must be >= 1".into()));
        }
        let Some(index) = &self.index else {
            return ExecOutput::err(ToolError::NoIndex);
        };
        let hits = index.top_k(&query, top_k);
        let mut content = format!("{} hits for \"{query}\":", hits.len());
        for (rank, hit) in hits.iter().enumerate() {
            let text = index.chunk_text(hit.chunk_id).unwrap_or("");
            let snippet = snippet_of(text, self.search.snippet_tokens);
            content.push_str(&format!(
                "\nrank={} chunk_id={} score={:.4} snippet={snippet}",
                rank + 1,
                hit.chunk_id,
                hit.score
            ));
        }
        ExecOutput::ok(content)
    }

    fn read_chunk(&self, args: &Args, produced: MsgId) -> ExecOutput {
        let chunk_id = match args.req_usize("chunk_id") {
            Ok(v) => v,
            Err(e) => return ExecOutput::err(e),
        };
        let Some(index) = &self.index else {
            return ExecOutput::err(ToolError::NoIndex);
        };
        match index.chunk_text(chunk_id) {
            Ok(text) => {
                let tokens = index.chunks()[chunk_id].token_count;
                ExecOutput::ok(format!(
                    "msg_id={produced} chunk_id={chunk_id} tokens={tokens}\n{text}"
                ))
                .with_refs(vec![produced])
            }
            Err(_) => ExecOutput::err(ToolError::UnknownChunk(chunk_id)),
        }
    }

    fn note(&mut self, args: &Args, round: u32, invoking: MsgId) -> ExecOutput {
        let (key, text) = match args.key_text() {
            Ok(kt) => kt,
            Err(e) => return ExecOutput::err(e),
        };
        match self.notebook.insert(&key, &text, round) {
            Ok(()) => ExecOutput::ok(format!(
                "noted \"{key}\"; msg_id(invoking_assistant)={invoking}"
            ))
            .with_refs(vec![invoking]),
            Err(e) => ExecOutput::err(e),
        }
    }

    fn update_note(&mut self, args: &Args, round: u32, invoking: MsgId) -> ExecOutput {
        let (key, text) = match args.key_text() {
            Ok(kt) => kt,
            Err(e) => return ExecOutput::err(e),
        };
        match self.notebook.update(&key, &text, round) {
            Ok(()) => ExecOutput::ok(format!(
                "updated \"{key}\"; msg_id(invoking_assistant)={invoking}"
            ))
            .with_refs(vec![invoking]),
            Err(e) => ExecOutput::err(e),
        }
    }

    fn read_note(&self, args: &Args) -> ExecOutput {
        let key = match args.opt_str("key") {
            Ok(k) => k,
            Err(e) => return ExecOutput::err(e),
        };
        match key.as_deref() {
            Some(k) if k != "*" => match self.notebook.get(k) {
                Some(entry) => ExecOutput::ok(format!("{k}: {}", entry.text)),
                None => ExecOutput::err(ToolError::UnknownKey(k.to_string())),
            },
            _ => {
                let mut content = format!("{} notes:", self.notebook.len());
                for (k, entry) in self.notebook.iter() {
                    content.push_str(&format!("\n{k}: {}", entry.text));
                }
                ExecOutput::ok(content)
            }
        }
    }

    /// Per-id validation happens against the state as it will be when the
    /// deletions apply: the invoking assistant message exists, the
    /// observation does not yet. When the tool set runs `toolcalls_only`,
    /// assistant messages lose only their call block; anything else falls
    /// back to a full stub (the thought-preserving treatment has nothing to
    /// preserve in an observation).
    fn delete_context(&self, args: &Args, state: &InteractionState, produced: MsgId) -> ExecOutput {
        let ids = match args.req_id_list("msg_ids") {
            Ok(v) => v,
            Err(e) => return ExecOutput::err(e),
        };
        let mut lines = Vec::with_capacity(ids.len());
        let mut deletions = Vec::new();
        let mut deleted_ids = Vec::new();
        for id in ids {
            let outcome = self.plan_deletion(state, id, produced);
            match outcome {
                Ok((mode, label)) => {
                    deletions.push((id, mode));
                    deleted_ids.push(id);
                    lines.push(format!("msg {id}: {label}"));
                }
                Err(code) => lines.push(format!("msg {id}: error={code}")),
            }
        }
        let mut content = format!("deleted {}/{} messages", deleted_ids.len(), lines.len());
        for line in &lines {
            content.push('\n');
            content.push_str(line);
        }
        ExecOutput::Obs {
            status: ObsStatus::Ok,
            content,
            referenced_msg_ids: deleted_ids,
            deletions,
            protocol_error: false,
        }
    }

    fn plan_deletion(
        &self,
        state: &InteractionState,
        id: MsgId,
        produced: MsgId,
    ) -> Result<(DeletionMode, &'static str), &'static str> {
        if id >= produced {
            return Err("UnknownMsgId");
        }
        let msg = state.message(id).ok_or("UnknownMsgId")?;
        if state.is_protected(id) {
            return Err("ProtectedMessage");
        }
        match self.tool_set.deletion_mode {
            DeletionMode::Full => Ok((DeletionMode::Full, "deleted")),
            DeletionMode::ToolcallsOnly => {
                if msg.role == Role::Assistant {
                    if msg.visibility == Visibility::Visible && msg.tool_calls.is_empty() {
                        Err("InvalidMode")
                    } else {
                        Ok((DeletionMode::ToolcallsOnly, "toolcalls deleted"))
                    }
                } else {
                    Ok((DeletionMode::Full, "deleted"))
                }
            }
        }
    }
}

fn snippet_of(text: &str, max_tokens: usize) -> String {
    let mut words: Vec<&str> = Vec::with_capacity(max_tokens);
    let mut truncated = false;
    for (i, w) in text.split_whitespace().enumerate() {
        if i == max_tokens {
            truncated = true;
            break;
        }
        words.push(w);
    }
    let mut s = words.join(" ");
    if truncated {
        s.push_str(" ...");
    }
    s
}

/// Lenient-but-typed argument access over the call's JSON object.
struct Args<'a>(Option<&'a serde_json::Map<String, Value>>);

impl<'a> Args<'a> {
    fn parse(v: &'a Value) -> Result<Self, ToolError> {
        match v {
            Value::Object(map) => Ok(Args(Some(map))),
            Value::Null => Ok(Args(None)),
            other => Err(ToolError::InvalidArgs(format!(
                "arguments must be a JSON object, got {other}"
            ))),
        }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.0.and_then(|m| m.get(key)).filter(|v| !v.is_null())
    }

    fn req_str(&self, key: &str) -> Result<String, ToolError> {
        self.opt_str(key)?
            .ok_or_else(|| ToolError::InvalidArgs(format!("missing required field \"{key}\"")))
    }

    fn opt_str(&self, key: &str) -> Result<Option<String>, ToolError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(ToolError::InvalidArgs(format!(
                "field \"{key}\" must be a string, got {other}"
            ))),
        }
    }

    fn req_usize(&self, key: &str) -> Result<usize, ToolError> {
        self.opt_usize(key)?
            .ok_or_else(|| ToolError::InvalidArgs(format!("missing required field \"{key}\"")))
    }

    fn opt_usize(&self, key: &str) -> Result<Option<usize>, ToolError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => match v.as_u64() {
                Some(n) => Ok(Some(n as usize)),
                None => Err(ToolError::InvalidArgs(format!(
                    "field \"{key}\" must be a non-negative integer, got {v}"
                ))),
            },
        }
    }

    fn opt_bool(&self, key: &str) -> Result<Option<bool>, ToolError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(*b)),
            Some(other) => Err(ToolError::InvalidArgs(format!(
                "field \"{key}\" must be a boolean, got {other}"
            ))),
        }
    }

    fn key_text(&self) -> Result<(String, String), ToolError> {
        Ok((self.req_str("key")?, self.req_str("text")?))
    }

    fn req_id_list(&self, key: &str) -> Result<Vec<MsgId>, ToolError> {
        let v = self
            .get(key)
            .ok_or_else(|| ToolError::InvalidArgs(format!("missing required field \"{key}\"")))?;
        let arr = v.as_array().ok_or_else(|| {
            ToolError::InvalidArgs(format!("field \"{key}\" must be an array of integers"))
        })?;
        arr.iter()
            .map(|item| {
                item.as_u64().ok_or_else(|| {
                    ToolError::InvalidArgs(format!(
                        "field \"{key}\" must contain non-negative integers, got {item}"
                    ))
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{Budgets, MessageDraft};
    use serde_json::json;

    fn env_with(corpus: &str) -> ToolEnv {
        ToolEnv::new(corpus, TokenCounter::Whitespace, ToolSet::full())
    }

    fn state() -> InteractionState {
        let mut s = InteractionState::new("q", Budgets::default());
        s.append(MessageDraft::user("the question"));
        s
    }

    /// Appends the invoking assistant message and runs the call, mirroring
    /// the engine's ordering. Returns the output and the produced id.
    fn run(env: &mut ToolEnv, s: &mut InteractionState, name: ToolName, args: Value) -> (ExecOutput, MsgId) {
        let call = ToolCall::new(name, args, "c");
        let invoking = s.append(MessageDraft::assistant("thought", vec![call.clone()]));
        let produced = s.next_msg_id();
        let out = env.execute(s, "sys", &call, invoking, produced);
        (out, produced)
    }

    fn content_of(out: &ExecOutput) -> &str {
        match out {
            ExecOutput::Obs { content, .. } => content,
            ExecOutput::Finish { .. } => panic!("expected observation"),
        }
    }

    fn corpus_of_tokens(n: usize) -> String {
        // Paragraphs of 100 tokens so the chunker has boundaries to work with.
        let mut paras = Vec::new();
        let mut left = n;
        let mut i = 0;
        while left > 0 {
            let take = left.min(100);
            let words: Vec<String> = (0..take).map(|j| format!("w{i}x{j}")).collect();
            paras.push(words.join(" "));
            left -= take;
            i += 1;
        }
        paras.join("\n\n")
    }

    #[test]
    fn analyze_classifies_empty_short_long() {
        let mut s = state();
        let (out, _) = run(&mut env_with(""), &mut s, ToolName::AnalyzeText, json!({}));
        assert!(content_of(&out).starts_with("size_class=empty tokens=0"));

        let mut s = state();
        let hundred = corpus_of_tokens(100);
        let (out, _) = run(&mut env_with(&hundred), &mut s, ToolName::AnalyzeText, json!({}));
        assert!(content_of(&out).starts_with("size_class=short tokens=100"));

        let mut s = state();
        let long = corpus_of_tokens(10_000);
        let mut env = env_with(&long).with_default_chunk_size(4096);
        let (out, _) = run(&mut env, &mut s, ToolName::AnalyzeText, json!({}));
        let content = content_of(&out);
        assert!(content.starts_with("size_class=long tokens=10000"));
        assert!(content.contains("chunk_estimate=3"), "{content}");
    }

    #[test]
    fn check_budget_reports_round_and_token_use() {
        let mut s = state();
        let mut env = env_with("irrelevant");
        let (out, _) = run(&mut env, &mut s, ToolName::CheckBudget, json!({}));
        let content = content_of(&out);
        assert!(content.contains("rounds_used=1/150"), "{content}");
        assert!(content.contains("/32000"), "{content}");
        let used: usize = content
            .split("tokens_used=")
            .nth(1)
            .unwrap()
            .split('/')
            .next()
            .unwrap()
            .parse()
            .unwrap();
        assert!(used > 0);
    }

    #[test]
    fn build_index_then_rebuild_flag() {
        let corpus = corpus_of_tokens(10_000);
        let mut env = env_with(&corpus);
        let mut s = state();
        let (out, _) = run(&mut env, &mut s, ToolName::BuildIndex, json!({"chunk_size": 4096}));
        assert_eq!(content_of(&out), "index built: 3 chunks (ids 0..=2), chunk_size=4096");

        let (out, _) = run(&mut env, &mut s, ToolName::BuildIndex, json!({"chunk_size": 4096}));
        assert!(content_of(&out).starts_with("error=IndexAlreadyBuilt"));

        let (out, _) = run(
            &mut env,
            &mut s,
            ToolName::BuildIndex,
            json!({"chunk_size": 1024, "rebuild": true}),
        );
        assert!(content_of(&out).starts_with("index built: 10 chunks"));
    }

    #[test]
    fn build_index_boundary_chunk_sizes() {
        let corpus = corpus_of_tokens(1000);
        let mut env = env_with(&corpus);
        let mut s = state();
        let (out, _) = run(&mut env, &mut s, ToolName::BuildIndex, json!({"chunk_size": 12_000}));
        assert!(matches!(out, ExecOutput::Obs { status: ObsStatus::Ok, .. }));
        let mut env = env_with(&corpus);
        let (out, _) = run(&mut env, &mut s, ToolName::BuildIndex, json!({"chunk_size": 12_001}));
        assert!(content_of(&out).starts_with("error=InvalidArgs"));
        let mut env = env_with("");
        let (out, _) = run(&mut env, &mut s, ToolName::BuildIndex, json!({"chunk_size": 1024}));
        assert!(content_of(&out).starts_with("error=EmptyCorpus"));
    }

    #[test]
    fn search_requires_index_and_enablement() {
        let corpus = corpus_of_tokens(2000);
        let mut env = env_with(&corpus);
        let mut s = state();
        let (out, _) = run(&mut env, &mut s, ToolName::SearchEngine, json!({"query": "w0x1"}));
        assert!(content_of(&out).starts_with("error=NoIndex"));

        run(&mut env, &mut s, ToolName::BuildIndex, json!({"chunk_size": 512}));
        let (out, _) = run(&mut env, &mut s, ToolName::SearchEngine, json!({"query": "w0x1"}));
        let content = content_of(&out);
        assert!(content.contains("hits for \"w0x1\""));
        assert!(content.contains("chunk_id=0"));

        let mut env = ToolEnv::new(corpus.as_str(), TokenCounter::Whitespace, ToolSet::without_search());
        let (out, _) = run(&mut env, &mut s, ToolName::SearchEngine, json!({"query": "w0x1"}));
        assert!(content_of(&out).starts_with("error=ToolDisabled"));
    }

    #[test]
    fn search_on_absent_terms_returns_zero_hits() {
        let corpus = corpus_of_tokens(1000);
        let mut env = env_with(&corpus);
        let mut s = state();
        run(&mut env, &mut s, ToolName::BuildIndex, json!({"chunk_size": 512}));
        let (out, _) = run(&mut env, &mut s, ToolName::SearchEngine, json!({"query": "zzz"}));
        assert_eq!(content_of(&out), "0 hits for \"zzz\":");
    }

    #[test]
    fn read_chunk_reports_its_own_msg_id_and_exact_text() {
        let corpus = corpus_of_tokens(1500);
        let mut env = env_with(&corpus);
        let mut s = state();
        run(&mut env, &mut s, ToolName::BuildIndex, json!({"chunk_size": 512}));
        let (out, produced) = run(&mut env, &mut s, ToolName::ReadChunk, json!({"chunk_id": 0}));
        let ExecOutput::Obs { content, referenced_msg_ids, .. } = &out else {
            panic!()
        };
        assert!(content.starts_with(&format!("msg_id={produced} chunk_id=0 tokens=")));
        assert_eq!(referenced_msg_ids, &vec![produced]);
        let index = env.index().unwrap();
        let body = content.split_once('\n').unwrap().1;
        assert_eq!(body, index.chunk_text(0).unwrap());

        let (out, _) = run(&mut env, &mut s, ToolName::ReadChunk, json!({"chunk_id": 999}));
        assert!(content_of(&out).starts_with("error=UnknownChunk"));
    }

    #[test]
    fn note_cycle_survives_deleting_the_invoking_message() {
        let mut env = env_with("small corpus text");
        let mut s = state();
        let (out, _) = run(
            &mut env,
            &mut s,
            ToolName::Note,
            json!({"key": "k1", "text": "v"}),
        );
        let ExecOutput::Obs { content, referenced_msg_ids, .. } = &out else {
            panic!()
        };
        let invoking = referenced_msg_ids[0];
        assert!(content.contains(&format!("msg_id(invoking_assistant)={invoking}")));
        s.append(MessageDraft::tool(content.clone()));
        s.delete_message(invoking, DeletionMode::Full).unwrap();

        let (out, _) = run(&mut env, &mut s, ToolName::ReadNote, json!({"key": "k1"}));
        assert_eq!(content_of(&out), "k1: v");
    }

    #[test]
    fn note_update_read_sequence() {
        let mut env = env_with("c");
        let mut s = state();
        run(&mut env, &mut s, ToolName::Note, json!({"key": "k", "text": "v1"}));
        let (out, _) = run(&mut env, &mut s, ToolName::Note, json!({"key": "k", "text": "v2"}));
        assert!(content_of(&out).starts_with("error=DuplicateKey"));
        let (out, _) = run(&mut env, &mut s, ToolName::UpdateNote, json!({"key": "k", "text": "v2"}));
        assert!(content_of(&out).starts_with("updated \"k\""));
        let (out, _) = run(&mut env, &mut s, ToolName::UpdateNote, json!({"key": "none", "text": "x"}));
        assert!(content_of(&out).starts_with("error=UnknownKey"));
        let (out, _) = run(&mut env, &mut s, ToolName::ReadNote, json!({}));
        assert_eq!(content_of(&out), "1 notes:\nk: v2");
        let entry = env.notebook().get("k").unwrap();
        assert!(entry.updated_round > entry.created_round);
    }

    #[test]
    fn delete_context_mixed_batch_reports_per_id() {
        let mut env = env_with("c");
        let mut s = state();
        let obs = s.append(MessageDraft::tool("fat observation"));
        let (out, _) = run(
            &mut env,
            &mut s,
            ToolName::DeleteContext,
            json!({"msg_ids": [obs, 0, 99]}),
        );
        let ExecOutput::Obs { content, deletions, referenced_msg_ids, .. } = &out else {
            panic!()
        };
        assert!(content.starts_with("deleted 1/3 messages"));
        assert!(content.contains(&format!("msg {obs}: deleted")));
        assert!(content.contains("msg 0: error=ProtectedMessage"));
        assert!(content.contains("msg 99: error=UnknownMsgId"));
        assert_eq!(deletions, &vec![(obs, DeletionMode::Full)]);
        assert_eq!(referenced_msg_ids, &vec![obs]);
    }

    #[test]
    fn delete_context_empty_batch_is_noop_success() {
        let mut env = env_with("c");
        let mut s = state();
        let (out, _) = run(&mut env, &mut s, ToolName::DeleteContext, json!({"msg_ids": []}));
        assert_eq!(content_of(&out), "deleted 0/0 messages");
    }

    #[test]
    fn toolcalls_only_mode_prunes_calls_but_stubs_observations_fully() {
        let mut env = ToolEnv::new(
            "c",
            TokenCounter::Whitespace,
            ToolSet::full().with_deletion_mode(DeletionMode::ToolcallsOnly),
        );
        let mut s = state();
        let call = ToolCall::new(ToolName::ReadChunk, json!({"chunk_id": 0}), "c0");
        let a = s.append(MessageDraft::assistant("scan chunk", vec![call]));
        let obs = s.append(MessageDraft::tool("chunk body"));
        let plain = s.append(MessageDraft::assistant("pure thought", vec![]));
        let (out, _) = run(
            &mut env,
            &mut s,
            ToolName::DeleteContext,
            json!({"msg_ids": [a, obs, plain]}),
        );
        let ExecOutput::Obs { content, deletions, .. } = &out else {
            panic!()
        };
        assert!(content.contains(&format!("msg {a}: toolcalls deleted")));
        assert!(content.contains(&format!("msg {obs}: deleted")));
        assert!(content.contains(&format!("msg {plain}: error=InvalidMode")));
        assert_eq!(
            deletions,
            &vec![(a, DeletionMode::ToolcallsOnly), (obs, DeletionMode::Full)]
        );
    }

    #[test]
    fn deleting_the_pending_observation_id_is_unknown() {
        let mut env = env_with("c");
        let mut s = state();
        let call = ToolCall::new(ToolName::DeleteContext, json!({"msg_ids": [2]}), "c");
        let invoking = s.append(MessageDraft::assistant("t", vec![call.clone()]));
        let produced = s.next_msg_id();
        assert_eq!(produced, 2);
        let out = env.execute(&s, "sys", &call, invoking, produced);
        assert!(content_of(&out).contains("msg 2: error=UnknownMsgId"));
    }

    #[test]
    fn invalid_args_are_protocol_errors_domain_errors_are_not() {
        let mut env = env_with("corpus");
        let mut s = state();
        let (out, _) = run(&mut env, &mut s, ToolName::ReadChunk, json!({"chunk_id": "zero"}));
        let ExecOutput::Obs { protocol_error, content, .. } = out else {
            panic!()
        };
        assert!(protocol_error, "{content}");

        let (out, _) = run(&mut env, &mut s, ToolName::ReadChunk, json!({"chunk_id": 0}));
        let ExecOutput::Obs { protocol_error, content, .. } = out else {
            panic!()
        };
        assert!(!protocol_error, "{content}"); // NoIndex: valid call, wrong state
        assert!(content.starts_with("error=NoIndex"));
    }

    #[test]
    fn finish_passes_answer_through() {
        let mut env = env_with("c");
        let mut s = state();
        let (out, _) = run(&mut env, &mut s, ToolName::Finish, json!({"answer": "B"}));
        assert_eq!(out, ExecOutput::Finish { answer: "B".into() });
        let (out, _) = run(&mut env, &mut s, ToolName::Finish, json!({}));
        assert_eq!(out, ExecOutput::Finish { answer: String::new() });
        let (out, _) = run(&mut env, &mut s, ToolName::Finish, json!({"answer": 42}));
        assert!(content_of(&out).starts_with("error=InvalidArgs"));
    }

    #[test]
    fn snippet_truncates_at_token_budget() {
        let text = (0..300).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let s = snippet_of(&text, 200);
        assert!(s.ends_with(" ..."));
        assert_eq!(s.split_whitespace().count(), 201); // 200 words + ellipsis
        assert_eq!(snippet_of("a b", 200), "a b");
    }
}
