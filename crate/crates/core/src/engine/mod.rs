//! The episode loop: serialize the state, ask the policy for one action,
//! execute it, fold action and observation back into the state, apply any
//! deletions, then enforce budgets. Repeats until `finish`, budget or round
//! exhaustion, or repeated protocol errors.

mod replay;
mod snapshots;
mod stats;
mod trajectory;

pub use replay::{replay_trajectory, ReplayError, ReplayPolicy};
pub use snapshots::capture_snapshots;
pub use stats::{format_usage_table, tool_usage_stats, UsageRow};
pub use trajectory::{
    Action, ByteRange, ConfigSnapshot, Deletion, EpisodeStatus, ScanMode, Snapshot, TracePoint,
    Trajectory, TrajectoryEvent, TrajectoryIoError,
};

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::counter::TokenCounter;
use crate::index::{corpus_hash, IndexCache};
use crate::state::{Budgets, InteractionState, MessageDraft};
use crate::tools::{tool_manifest, ExecOutput, Observation, SearchDefaults, ToolEnv, ToolSet};

/// Consecutive malformed/ill-argued actions tolerated before the episode is
/// aborted with `ProtocolError`.
pub const PROTOCOL_ERROR_LIMIT: u32 = 3;

/// Injected after an unparseable policy response so the model sees what went
/// wrong. Must stay stable: replays reproduce it.
pub const MALFORMED_NUDGE: &str =
    "error=Malformed: reply with exactly one tool call from the manifest.";

#[derive(Debug, Clone)]
pub struct EpisodeConfig {
    pub budgets: Budgets,
    pub tool_set: ToolSet,
    pub system_block: String,
    pub counter: TokenCounter,
    /// `buildIndex` chunk size when the call omits one.
    pub default_chunk_size: usize,
    pub search: SearchDefaults,
    /// Grouping label recorded on the trajectory (benchmark cell, dataset
    /// name, ...).
    pub tag: String,
    pub declared_mode: Option<ScanMode>,
    /// Shared index cache; episodes over the same corpus reuse one build.
    pub index_cache: Option<Arc<IndexCache>>,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            budgets: Budgets::default(),
            tool_set: ToolSet::full(),
            system_block: String::new(),
            counter: TokenCounter::default(),
            default_chunk_size: 4_096,
            search: SearchDefaults::default(),
            tag: "default".into(),
            declared_mode: None,
            index_cache: None,
        }
    }
}

impl EpisodeConfig {
    /// The plain-data image stored on every trajectory.
    pub fn snapshot(&self) -> ConfigSnapshot {
        ConfigSnapshot {
            budgets: self.budgets,
            enabled_tools: self.tool_set.enabled().to_vec(),
            deletion_mode: self.tool_set.deletion_mode,
            counter_scheme: self.counter.scheme_name().to_string(),
            default_chunk_size: self.default_chunk_size,
            search_top_k: self.search.top_k,
            snippet_tokens: self.search.snippet_tokens,
            system_block: self.system_block.clone(),
        }
    }
}

/// What the policy sees each round.
pub struct PolicyView<'a> {
    pub state: &'a InteractionState,
    /// Full text serialization of system block + visible messages.
    pub serialized: &'a str,
    pub system_block: &'a str,
    /// Tool manifest for the episode's tool set (JSON array).
    pub manifest: &'a serde_json::Value,
    /// The round number the produced action will get (1-based).
    pub round: u32,
}

/// A parsed policy response: free-form thought plus exactly one tool call.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyStep {
    pub thought: String,
    pub call: crate::tools::ToolCall,
}

/// Policy misbehavior. `Malformed` is recoverable (recorded, nudged,
/// counted); `Fatal` ends the episode immediately.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyFailure {
    #[error("malformed policy response")]
    Malformed { raw: String },
    #[error("policy failure: {message}")]
    Fatal { message: String },
}

/// One action per round, given the current serialized state and the tool
/// manifest.
pub trait Policy {
    fn step(&mut self, view: &PolicyView<'_>) -> Result<PolicyStep, PolicyFailure>;
}

impl<P: Policy + ?Sized> Policy for &mut P {
    fn step(&mut self, view: &PolicyView<'_>) -> Result<PolicyStep, PolicyFailure> {
        (**self).step(view)
    }
}

/// Runs one episode to completion. Policy misbehavior never panics or
/// errors out of this function; it lands in `Trajectory::status`.
pub fn run_episode(
    config: &EpisodeConfig,
    policy: &mut dyn Policy,
    corpus: Arc<str>,
    query: &str,
    golden_answer: Option<&str>,
) -> Trajectory {
    run_episode_full(config, policy, corpus, query, golden_answer).0
}

/// As [`run_episode`], also returning the final interaction state (tests and
/// sample construction want the actual state, not just its hash).
pub fn run_episode_full(
    config: &EpisodeConfig,
    policy: &mut dyn Policy,
    corpus: Arc<str>,
    query: &str,
    golden_answer: Option<&str>,
) -> (Trajectory, InteractionState) {
    assert!(!query.is_empty(), "query must be non-empty");
    assert!(
        config.budgets.token_budget > 0,
        "token_budget must be positive"
    );
    assert!(
        config.budgets.max_rounds >= config.budgets.rounds_budget,
        "max_rounds must be at least rounds_budget"
    );

    let corpus_sha256 = corpus_hash(&corpus);
    let mut env = ToolEnv::new(
        corpus,
        config.counter.clone(),
        config.tool_set.clone(),
    )
    .with_default_chunk_size(config.default_chunk_size)
    .with_search_defaults(config.search);
    if let Some(cache) = &config.index_cache {
        env = env.with_index_cache(cache.clone());
    }

    let manifest = tool_manifest(&config.tool_set);
    let mut state = InteractionState::new(query, config.budgets);
    state.append(MessageDraft::user(query));

    let mut events: Vec<TrajectoryEvent> = Vec::new();
    let mut snapshots: Vec<Snapshot> = Vec::new();
    let mut trace = vec![TracePoint {
        round: 0,
        visible_tokens: state.visible_tokens(&config.counter, &config.system_block),
    }];
    let mut consecutive_errors: u32 = 0;
    let mut status: Option<EpisodeStatus> = None;
    let mut final_answer: Option<String> = None;
    let mut fatal: Option<String> = None;

    while status.is_none() {
        if state.round() >= config.budgets.max_rounds {
            status = Some(EpisodeStatus::RoundsExceeded);
            break;
        }

        let rendered = state.render(&config.system_block);
        let view = PolicyView {
            state: &state,
            serialized: &rendered.text,
            system_block: &config.system_block,
            manifest: &manifest,
            round: state.round() + 1,
        };
        let step = policy.step(&view);

        match step {
            Err(PolicyFailure::Fatal { message }) => {
                fatal = Some(message);
                status = Some(EpisodeStatus::ProtocolError);
            }
            Err(PolicyFailure::Malformed { raw }) => {
                state.append(MessageDraft::assistant(raw.clone(), Vec::new()));
                state.append(MessageDraft::user(MALFORMED_NUDGE));
                consecutive_errors += 1;
                events.push(TrajectoryEvent {
                    round: state.round(),
                    action: Action::Invalid { raw },
                    observation: None,
                    deletions: Vec::new(),
                });
                finish_round(config, &state, &mut trace, consecutive_errors, &mut status);
            }
            Ok(PolicyStep { thought, call }) => {
                let invoking =
                    state.append(MessageDraft::assistant(thought.clone(), vec![call.clone()]));
                if call.name.is_context_editing() {
                    let r = state.render(&config.system_block);
                    let span = r.spans.last().expect("just appended");
                    snapshots.push(Snapshot {
                        round: state.round(),
                        loss_mask: vec![ByteRange {
                            start: span.start,
                            end: span.end,
                        }],
                        serialized_state: r.text,
                    });
                }
                let produced = state.next_msg_id();
                match env.execute(&state, &config.system_block, &call, invoking, produced) {
                    ExecOutput::Finish { answer } => {
                        events.push(TrajectoryEvent {
                            round: state.round(),
                            action: Action::Call { thought, call },
                            observation: None,
                            deletions: Vec::new(),
                        });
                        trace.push(TracePoint {
                            round: state.round(),
                            visible_tokens: state
                                .visible_tokens(&config.counter, &config.system_block),
                        });
                        final_answer = Some(answer);
                        status = Some(EpisodeStatus::Finished);
                    }
                    ExecOutput::Obs {
                        status: obs_status,
                        content,
                        referenced_msg_ids,
                        deletions,
                        protocol_error,
                    } => {
                        let obs_id = state.append(
                            MessageDraft::tool(content.clone()).with_call_id(call.call_id.clone()),
                        );
                        assert_eq!(obs_id, produced, "observation id prediction broke");
                        for (msg_id, mode) in &deletions {
                            state
                                .delete_message(*msg_id, *mode)
                                .expect("executor plans only applicable deletions");
                        }
                        if protocol_error {
                            consecutive_errors += 1;
                        } else {
                            consecutive_errors = 0;
                        }
                        let call_id = call.call_id.clone();
                        events.push(TrajectoryEvent {
                            round: state.round(),
                            action: Action::Call { thought, call },
                            observation: Some(Observation {
                                call_id,
                                status: obs_status,
                                content,
                                produced_msg_id: obs_id,
                                referenced_msg_ids,
                            }),
                            deletions: deletions
                                .into_iter()
                                .map(|(msg_id, mode)| Deletion { msg_id, mode })
                                .collect(),
                        });
                        finish_round(config, &state, &mut trace, consecutive_errors, &mut status);
                    }
                }
            }
        }
    }

    let status = status.expect("loop exits only with a status");
    debug_assert_eq!(status == EpisodeStatus::Finished, final_answer.is_some());

    let config_snapshot = config.snapshot();
    let trajectory_id = derive_trajectory_id(
        &config_snapshot,
        &config.tag,
        query,
        &corpus_sha256,
        config.declared_mode,
    );
    let final_state_sha256 = hex_sha256(&state.serialize(&config.system_block));

    let trajectory = Trajectory {
        trajectory_id,
        tag: config.tag.clone(),
        query: query.to_string(),
        golden_answer: golden_answer.map(str::to_string),
        declared_mode: config.declared_mode,
        config: config_snapshot,
        corpus_sha256,
        status,
        final_answer,
        events,
        snapshots,
        token_trace: trace,
        fatal,
        final_state_sha256,
    };
    (trajectory, state)
}

/// End-of-round bookkeeping shared by valid and malformed rounds: trace
/// point, then budget > protocol > rounds checks (in that precedence).
fn finish_round(
    config: &EpisodeConfig,
    state: &InteractionState,
    trace: &mut Vec<TracePoint>,
    consecutive_errors: u32,
    status: &mut Option<EpisodeStatus>,
) {
    let visible = state.visible_tokens(&config.counter, &config.system_block);
    trace.push(TracePoint {
        round: state.round(),
        visible_tokens: visible,
    });
    if visible > config.budgets.token_budget {
        *status = Some(EpisodeStatus::BudgetExceeded);
    } else if consecutive_errors >= PROTOCOL_ERROR_LIMIT {
        *status = Some(EpisodeStatus::ProtocolError);
    } else if state.round() >= config.budgets.max_rounds {
        *status = Some(EpisodeStatus::RoundsExceeded);
    }
}

pub(crate) fn hex_sha256(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Deterministic id: identical (config, tag, query, corpus, mode) runs get
/// identical ids, so re-running a batch overwrites rather than duplicates.
fn derive_trajectory_id(
    config: &ConfigSnapshot,
    tag: &str,
    query: &str,
    corpus_sha256: &str,
    declared_mode: Option<ScanMode>,
) -> String {
    let payload = serde_json::json!({
        "config": config,
        "tag": tag,
        "query": query,
        "corpus": corpus_sha256,
        "mode": declared_mode,
    });
    hex_sha256(&payload.to_string())[..16].to_string()
}

/// Test scaffolding shared by the engine submodule tests.
#[cfg(test)]
pub(crate) mod testkit {
    use super::{Policy, PolicyFailure, PolicyStep, PolicyView};
    use crate::tools::{ToolCall, ToolName};

    /// Plays a fixed list of steps, then finishes.
    pub struct Script {
        steps: Vec<Result<PolicyStep, PolicyFailure>>,
        cursor: usize,
    }

    impl Script {
        pub fn new(steps: Vec<Result<PolicyStep, PolicyFailure>>) -> Self {
            Script { steps, cursor: 0 }
        }
    }

    impl Policy for Script {
        fn step(&mut self, _view: &PolicyView<'_>) -> Result<PolicyStep, PolicyFailure> {
            let i = self.cursor;
            self.cursor += 1;
            match self.steps.get(i) {
                Some(s) => s.clone(),
                None => Ok(step(ToolName::Finish, serde_json::json!({"answer": "done"}))),
            }
        }
    }

    pub fn step(name: ToolName, args: serde_json::Value) -> PolicyStep {
        PolicyStep {
            thought: format!("calling {}", name.as_str()),
            call: ToolCall::new(name, args, format!("call_{}", name.as_str())),
        }
    }

    /// Runs a fixed all-valid script to completion.
    pub fn episode(
        config: &super::EpisodeConfig,
        steps: Vec<PolicyStep>,
        corpus: &str,
        query: &str,
        golden: Option<&str>,
    ) -> (super::Trajectory, crate::state::InteractionState) {
        let mut script = Script::new(steps.into_iter().map(Ok).collect());
        super::run_episode_full(config, &mut script, corpus.into(), query, golden)
    }
}
