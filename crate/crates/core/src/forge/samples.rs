//! Supervised sample construction: replays a trajectory's recorded appends
//! and deletions (no corpus or tools needed) and cuts one sample per
//! well-formed assistant step. Sample `i`'s input is the serialized state
//! the policy actually saw at step `i`; the target is the assistant segment
//! it produced; the loss mask marks exactly that segment.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{hex_sha256, Action, ByteRange, Trajectory, MALFORMED_NUDGE};
use crate::state::{InteractionState, MessageDraft};
use crate::tools::ToolName;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    /// Serialized state up to (not including) the target step, with every
    /// earlier deletion applied.
    pub input_context: String,
    /// The assistant segment of the target step: thought plus tool call,
    /// exactly as serialized.
    pub target: String,
    /// Byte ranges over `input_context + target` that contribute to the
    /// loss: exactly the target segment.
    pub loss_mask: Vec<ByteRange>,
    pub source_trajectory_id: String,
    /// 1-based round of the target step.
    pub step_index: u32,
    /// Wire name of the target action's tool.
    pub primary_action: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("replay mismatch at round {round}: {detail}")]
pub struct ReplayMismatch {
    pub round: u32,
    pub detail: String,
}

fn mismatch(round: u32, detail: impl Into<String>) -> ReplayMismatch {
    ReplayMismatch {
        round,
        detail: detail.into(),
    }
}

/// One sample per well-formed assistant step. Malformed rounds advance the
/// replayed state (their raw text and the nudge are part of later inputs)
/// but yield no sample — there is no action to learn from them.
///
/// Corruption checks: recorded message ids must land where recorded, the
/// replayed final state must hash to `final_state_sha256`, and at every
/// round with a recorded snapshot the replayed serialization must equal it
/// byte for byte. The snapshot check is what catches tampering inside
/// messages that were later deleted — their text never reaches the final
/// state, but it is part of the inputs being trained on.
pub fn explode_samples(t: &Trajectory) -> Result<Vec<TrainingSample>, ReplayMismatch> {
    let system_block = &t.config.system_block;
    let mut state = InteractionState::new(&t.query, t.config.budgets);
    state.append(MessageDraft::user(&t.query));

    let mut samples = Vec::new();
    for e in &t.events {
        match &e.action {
            Action::Invalid { raw } => {
                state.append(MessageDraft::assistant(raw.clone(), Vec::new()));
                state.append(MessageDraft::user(MALFORMED_NUDGE));
            }
            Action::Call { thought, call } => {
                state.append(MessageDraft::assistant(thought.clone(), vec![call.clone()]));
                let rendered = state.render(system_block);
                if let Some(snap) = t.snapshots.iter().find(|s| s.round == e.round) {
                    if snap.serialized_state != rendered.text {
                        return Err(mismatch(
                            e.round,
                            "serialized state diverges from the recorded snapshot",
                        ));
                    }
                }
                let span = rendered.spans.last().expect("state is never empty here");
                // Appending never rewrites earlier segments, so the text
                // before the new span is the state the policy saw.
                let input_context = rendered.text[..span.start].to_string();
                let target = rendered.text[span.start..span.end].to_string();
                samples.push(TrainingSample {
                    loss_mask: vec![ByteRange {
                        start: span.start,
                        end: span.end,
                    }],
                    input_context,
                    target,
                    source_trajectory_id: t.trajectory_id.clone(),
                    step_index: e.round,
                    primary_action: call.name.as_str().to_string(),
                });
                match &e.observation {
                    Some(obs) => {
                        let got = state.append(
                            MessageDraft::tool(obs.content.clone())
                                .with_call_id(obs.call_id.clone()),
                        );
                        if got != obs.produced_msg_id {
                            return Err(mismatch(
                                e.round,
                                format!(
                                    "observation landed at msg {got}, recorded {}",
                                    obs.produced_msg_id
                                ),
                            ));
                        }
                    }
                    None if call.name == ToolName::Finish => {}
                    None => {
                        return Err(mismatch(
                            e.round,
                            format!("{} call has no observation", call.name.as_str()),
                        ));
                    }
                }
            }
        }
        for d in &e.deletions {
            state
                .delete_message(d.msg_id, d.mode)
                .map_err(|err| mismatch(e.round, err.to_string()))?;
        }
    }

    let final_hash = hex_sha256(&state.serialize(system_block));
    if final_hash != t.final_state_sha256 {
        return Err(mismatch(
            t.events.len() as u32,
            "replayed final state hash diverges from the recording",
        ));
    }
    Ok(samples)
}

/// Per-action sample counts before and after balancing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub before: BTreeMap<String, usize>,
    pub after: BTreeMap<String, usize>,
}

fn histogram(samples: &[TrainingSample]) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for s in samples {
        *h.entry(s.primary_action.clone()).or_insert(0) += 1;
    }
    h
}

/// Seeded downsampling of overrepresented actions: any action whose share
/// exceeds its cap loses uniformly chosen samples until it fits. Actions
/// without a cap and samples that survive are untouched, in their original
/// order. Caps must leave a feasible mix (shares of capped actions can sum
/// below 1 only if some action is uncapped), or the result drains.
pub fn balance_actions(
    samples: Vec<TrainingSample>,
    caps: &BTreeMap<String, f64>,
    seed: u64,
) -> (Vec<TrainingSample>, BalanceReport) {
    let before = histogram(&samples);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![true; samples.len()];

    loop {
        let live: Vec<usize> = (0..samples.len()).filter(|&i| keep[i]).collect();
        let n = live.len();
        if n == 0 {
            break;
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for &i in &live {
            *counts.entry(samples[i].primary_action.as_str()).or_insert(0) += 1;
        }
        // Worst offender first; removals shift every share, so re-derive
        // each iteration.
        let offender = counts
            .iter()
            .filter_map(|(action, &count)| {
                let cap = *caps.get(*action)?;
                let excess = count as f64 - cap * n as f64;
                (excess > 1e-9).then_some((*action, count, cap, excess))
            })
            .max_by(|a, b| a.3.total_cmp(&b.3));
        let Some((action, count, cap, _)) = offender else {
            break;
        };
        // Keeping k of this action leaves share k / (n - count + k) ≤ cap.
        let k_target = if cap >= 1.0 {
            count
        } else {
            (cap * (n - count) as f64 / (1.0 - cap)).floor() as usize
        };
        let remove = count - k_target.min(count);
        debug_assert!(remove > 0, "offender implies at least one removal");
        let of_action: Vec<usize> = live
            .iter()
            .copied()
            .filter(|&i| samples[i].primary_action == action)
            .collect();
        for pick in rand::seq::index::sample(&mut rng, of_action.len(), remove).into_vec() {
            keep[of_action[pick]] = false;
        }
    }

    let kept: Vec<TrainingSample> = samples
        .into_iter()
        .zip(keep)
        .filter_map(|(s, k)| k.then_some(s))
        .collect();
    let report = BalanceReport {
        before,
        after: histogram(&kept),
    };
    (kept, report)
}

#[derive(Debug, thiserror::Error)]
pub enum SampleIoError {
    #[error("sample io: {0}")]
    Io(#[from] std::io::Error),
    #[error("sample record: {0}")]
    Json(#[from] serde_json::Error),
}

/// One JSON object per line, schema = [`TrainingSample`]'s fields.
pub fn write_samples_jsonl(path: &Path, samples: &[TrainingSample]) -> Result<(), SampleIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_jsonl(path: &Path) -> Result<Vec<TrainingSample>, SampleIoError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
