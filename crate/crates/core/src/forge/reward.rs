//! Trajectory-level rewards and group-relative advantages. The reward is a
//! pure function of three booleans (correct, formatted, finished); advantages
//! normalize rewards within a rollout group so every group is zero-mean.

use serde::{Deserialize, Serialize};

use crate::engine::{EpisodeStatus, Trajectory};

use super::grade::{Grader, GraderError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correctness {
    Correct,
    Incorrect,
    /// Unfinished trajectories are never graded.
    #[serde(rename = "n/a")]
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub trajectory_id: String,
    pub reward: f64,
    pub correctness: Correctness,
    pub formatted: bool,
    pub finished: bool,
}

/// What counts as a well-formatted answer beyond reaching `finish`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FormatRules {
    /// Brevity cap on the final answer, in characters. `None`: no cap.
    pub max_answer_chars: Option<usize>,
}

/// The full reward table. Only a correct, formatted, finished trajectory
/// earns +1; a wrong answer delivered properly costs −0.5; everything else
/// (aborted, unformatted, ungraded) costs −1.
pub fn reward_value(correctness: Correctness, formatted: bool, finished: bool) -> f64 {
    match (correctness, formatted, finished) {
        (Correctness::Correct, true, true) => 1.0,
        (Correctness::Incorrect, true, true) => -0.5,
        _ => -1.0,
    }
}

/// Scores one trajectory. The grader runs only on finished trajectories;
/// budget and round aborts are unfinished by definition and cost −1 without
/// a grader call.
pub fn compute_reward(
    trajectory: &Trajectory,
    grader: &mut dyn Grader,
    rules: &FormatRules,
) -> Result<RewardRecord, GraderError> {
    let finished =
        trajectory.status == EpisodeStatus::Finished && trajectory.final_answer.is_some();
    let answer = trajectory.final_answer.as_deref().unwrap_or("");
    let formatted = finished
        && rules
            .max_answer_chars
            .is_none_or(|cap| answer.chars().count() <= cap);
    let correctness = if finished {
        let golden = trajectory.golden_answer.as_deref().unwrap_or("");
        if grader.grade(&trajectory.query, golden, answer)? {
            Correctness::Correct
        } else {
            Correctness::Incorrect
        }
    } else {
        Correctness::NotApplicable
    };
    Ok(RewardRecord {
        trajectory_id: trajectory.trajectory_id.clone(),
        reward: reward_value(correctness, formatted, finished),
        correctness,
        formatted,
        finished,
    })
}

/// Baseline style for [`group_advantage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdvantageMode {
    /// Subtract the group mean and divide by the group (population) std.
    #[default]
    MeanStd,
    /// Subtract the group mean only.
    MeanOnly,
}

/// Degenerate groups (all rewards equal) divide by this instead of 0,
/// which zeroes every advantage.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AdvantageError {
    #[error("rollout group needs at least 2 trajectories, got {0}")]
    GroupTooSmall(usize),
}

/// Per-trajectory advantages within one rollout group. Every snapshot of a
/// trajectory inherits that trajectory's advantage, so this runs once per
/// group of episode rewards.
pub fn group_advantage(rewards: &[f64], mode: AdvantageMode) -> Result<Vec<f64>, AdvantageError> {
    if rewards.len() < 2 {
        return Err(AdvantageError::GroupTooSmall(rewards.len()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let centered: Vec<f64> = rewards.iter().map(|r| r - mean).collect();
    Ok(match mode {
        AdvantageMode::MeanOnly => centered,
        AdvantageMode::MeanStd => {
            let var = centered.iter().map(|c| c * c).sum::<f64>() / n;
            let std = var.sqrt().max(STD_FLOOR);
            centered.into_iter().map(|c| c / std).collect()
        }
    })
}
