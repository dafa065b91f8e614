//! Training-data construction from recorded trajectories: grade answers,
//! reject bad trajectories (outcome and process filters), explode survivors
//! into per-step supervised samples, rebalance the action mix, and score
//! episodes for reinforcement learning (rewards and group advantages).
//!
//! Everything here is a pure transformation over recorded [`Trajectory`]
//! values — no corpus, no tools, no policy — except the LLM judge grader,
//! which calls out over HTTP.
//!
//! [`Trajectory`]: crate::engine::Trajectory

mod filters;
mod grade;
mod reward;
mod samples;

pub use filters::{
    outcome_filter, passes_process, process_filter, FilterReport, ProcessRules,
};
pub use grade::{ContainmentGrader, ExactGrader, Grader, GraderError, JudgeGrader};
pub use reward::{
    compute_reward, group_advantage, reward_value, AdvantageError, AdvantageMode, Correctness,
    FormatRules, RewardRecord, STD_FLOOR,
};
pub use samples::{
    balance_actions, explode_samples, read_samples_jsonl, write_samples_jsonl, BalanceReport,
    ReplayMismatch, SampleIoError, TrainingSample,
};

use crate::engine::Trajectory;

/// The full SFT pipeline: outcome filter → process filter → explode →
/// balance. Returns the surviving samples and the stage-count report.
pub fn forge_samples(
    trajectories: &[Trajectory],
    grader: &mut dyn Grader,
    rules: &ProcessRules,
    caps: &std::collections::BTreeMap<String, f64>,
    seed: u64,
) -> Result<(Vec<TrainingSample>, FilterReport, BalanceReport), ForgeError> {
    let (passed, report) = outcome_filter(trajectories, grader)?;
    let (kept, mut report) = process_filter(passed, rules, report);
    let mut samples = Vec::new();
    for t in kept {
        samples.extend(explode_samples(t)?);
    }
    report.samples_before_balance = samples.len();
    let (balanced, balance_report) = balance_actions(samples, caps, seed);
    report.samples_after_balance = balanced.len();
    Ok((balanced, report, balance_report))
}

#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error(transparent)]
    Grader(#[from] GraderError),
    #[error(transparent)]
    Replay(#[from] ReplayMismatch),
}
