//! Re-execution of recorded trajectories. A [`ReplayPolicy`] feeds the
//! recorded actions back through the real engine against a fresh
//! environment; everything else (observations, deletions, statuses, final
//! state) must fall out identically. Divergence means the trajectory and
//! corpus don't belong together, or determinism broke — both worth failing
//! loudly over.

use std::sync::Arc;

use super::trajectory::{Action, ConfigSnapshot, Trajectory};
use super::{run_episode, EpisodeConfig, Policy, PolicyFailure, PolicyStep, PolicyView};
use crate::counter::TokenCounter;
use crate::index::corpus_hash;
use crate::tools::ToolSet;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("counter scheme {0:?} cannot be reconstructed")]
    UnknownCounterScheme(String),
    #[error("corpus hash {got} does not match the trajectory's {want}")]
    CorpusMismatch { want: String, got: String },
}

/// Replays a trajectory's recorded actions verbatim, in order.
pub struct ReplayPolicy<'a> {
    recorded: &'a Trajectory,
    cursor: usize,
}

impl<'a> ReplayPolicy<'a> {
    pub fn new(recorded: &'a Trajectory) -> Self {
        ReplayPolicy {
            recorded,
            cursor: 0,
        }
    }
}

impl Policy for ReplayPolicy<'_> {
    fn step(&mut self, _view: &PolicyView<'_>) -> Result<PolicyStep, PolicyFailure> {
        let i = self.cursor;
        self.cursor += 1;
        match self.recorded.events.get(i) {
            Some(ev) => match &ev.action {
                Action::Call { thought, call } => Ok(PolicyStep {
                    thought: thought.clone(),
                    call: call.clone(),
                }),
                Action::Invalid { raw } => Err(PolicyFailure::Malformed { raw: raw.clone() }),
            },
            // Recorded episodes end inside the loop; the only way to get
            // here is a recorded mid-round fatal, or a truncated file.
            None => Err(PolicyFailure::Fatal {
                message: self
                    .recorded
                    .fatal
                    .clone()
                    .unwrap_or_else(|| "replay exhausted: trajectory is truncated".into()),
            }),
        }
    }
}

/// Rebuilds an [`EpisodeConfig`] from a trajectory's stored snapshot.
/// Externally-supplied token counters are not reconstructible.
pub fn config_from_snapshot(
    snapshot: &ConfigSnapshot,
    recorded: &Trajectory,
) -> Result<EpisodeConfig, ReplayError> {
    let counter = TokenCounter::from_scheme_name(&snapshot.counter_scheme)
        .ok_or_else(|| ReplayError::UnknownCounterScheme(snapshot.counter_scheme.clone()))?;
    Ok(EpisodeConfig {
        budgets: snapshot.budgets,
        tool_set: ToolSet::from_parts(snapshot.enabled_tools.clone(), snapshot.deletion_mode),
        system_block: snapshot.system_block.clone(),
        counter,
        default_chunk_size: snapshot.default_chunk_size,
        search: crate::tools::SearchDefaults {
            top_k: snapshot.search_top_k,
            snippet_tokens: snapshot.snippet_tokens,
        },
        tag: recorded.tag.clone(),
        declared_mode: recorded.declared_mode,
        index_cache: None,
    })
}

/// Runs the recorded actions against a fresh environment over `corpus` and
/// returns the re-recorded trajectory. On a healthy recording the result is
/// equal to the input (including observation contents and state hash).
pub fn replay_trajectory(recorded: &Trajectory, corpus: Arc<str>) -> Result<Trajectory, ReplayError> {
    let got = corpus_hash(&corpus);
    if got != recorded.corpus_sha256 {
        return Err(ReplayError::CorpusMismatch {
            want: recorded.corpus_sha256.clone(),
            got,
        });
    }
    let config = config_from_snapshot(&recorded.config, recorded)?;
    let mut policy = ReplayPolicy::new(recorded);
    Ok(run_episode(
        &config,
        &mut policy,
        corpus,
        &recorded.query,
        recorded.golden_answer.as_deref(),
    ))
}
