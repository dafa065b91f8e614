//! The two rejection filters between raw trajectories and training samples:
//! outcome (keep only trajectories graded correct) and process (keep only
//! trajectories that pruned reads in time and, for linear scans, skipped no
//! chunks). Counts funnel monotonically into a [`FilterReport`].

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::engine::{Action, EpisodeStatus, ScanMode, Trajectory, TrajectoryEvent};
use crate::tools::{ObsStatus, ToolName};

use super::grade::{Grader, GraderError};

/// Stage counts for one forge run, one column per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub total: usize,
    pub outcome_pass: usize,
    pub process_pass: usize,
    pub samples_before_balance: usize,
    pub samples_after_balance: usize,
}

impl FilterReport {
    /// One-row table, columns named after the pipeline stages.
    pub fn format_table(&self) -> String {
        let header = [
            "trajs",
            "outcome_filter",
            "process_filter",
            "samples",
            "action_balancing",
        ];
        let values = [
            self.total,
            self.outcome_pass,
            self.process_pass,
            self.samples_before_balance,
            self.samples_after_balance,
        ];
        let mut out = String::new();
        for (i, h) in header.iter().enumerate() {
            let _ = write!(out, "{}{h}", if i == 0 { "" } else { "  " });
        }
        out.push('\n');
        for (i, (h, v)) in header.iter().zip(values).enumerate() {
            let _ = write!(out, "{}{v:>width$}", if i == 0 { "" } else { "  " }, width = h.len());
        }
        out.push('\n');
        out
    }
}

/// Keeps trajectories whose final answer the grader accepts. Unfinished
/// trajectories have no final answer and always fail. A grader error aborts
/// the whole filter — no silent passes.
pub fn outcome_filter<'a>(
    trajectories: &'a [Trajectory],
    grader: &mut dyn Grader,
) -> Result<(Vec<&'a Trajectory>, FilterReport), GraderError> {
    let mut passed = Vec::new();
    for t in trajectories {
        if t.status != EpisodeStatus::Finished {
            continue;
        }
        let Some(answer) = t.final_answer.as_deref() else {
            continue;
        };
        let golden = t.golden_answer.as_deref().unwrap_or("");
        if grader.grade(&t.query, golden, answer)? {
            passed.push(t);
        }
    }
    let report = FilterReport {
        total: trajectories.len(),
        outcome_pass: passed.len(),
        ..FilterReport::default()
    };
    Ok((passed, report))
}

/// Process-quality rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProcessRules {
    /// A chunk observation read in round r must be deleted by round
    /// r + prune_window.
    pub prune_window: u32,
}

impl Default for ProcessRules {
    fn default() -> Self {
        ProcessRules { prune_window: 2 }
    }
}

/// Applies the process rules to outcome-passed trajectories and fills in
/// `process_pass`.
pub fn process_filter<'a>(
    passed: Vec<&'a Trajectory>,
    rules: &ProcessRules,
    mut report: FilterReport,
) -> (Vec<&'a Trajectory>, FilterReport) {
    let kept: Vec<&Trajectory> = passed
        .into_iter()
        .filter(|t| passes_process(t, rules))
        .collect();
    report.process_pass = kept.len();
    (kept, report)
}

pub fn passes_process(t: &Trajectory, rules: &ProcessRules) -> bool {
    timely_pruning(t, rules.prune_window)
        && (t.declared_mode != Some(ScanMode::LinearScan) || full_contiguous_reads(t))
}

/// True when `e` is a successful call to `name`.
fn ok_call(e: &TrajectoryEvent, name: ToolName) -> Option<&TrajectoryEvent> {
    match &e.action {
        Action::Call { call, .. } if call.name == name => {
            let obs = e.observation.as_ref()?;
            (obs.status == ObsStatus::Ok).then_some(e)
        }
        _ => None,
    }
}

/// Rule 1: every successfully read chunk observation is deleted within the
/// window. Reads that survive to the end of the trajectory fail — finishing
/// with chunk text still in context is exactly the failure mode this
/// rejects.
fn timely_pruning(t: &Trajectory, window: u32) -> bool {
    t.events
        .iter()
        .filter_map(|e| ok_call(e, ToolName::ReadChunk))
        .all(|read| {
            let obs_id = read.observation.as_ref().expect("ok_call checked").produced_msg_id;
            t.events.iter().any(|later| {
                later.round > read.round
                    && later.round <= read.round + window
                    && later.deletions.iter().any(|d| d.msg_id == obs_id)
            })
        })
}

/// Rule 2 (linear scans only): the set of chunk ids read covers the index
/// end to end. The expected chunk count comes from the build observation;
/// a linear-scan trajectory that never built or never read anything fails.
fn full_contiguous_reads(t: &Trajectory) -> bool {
    let mut read_ids: Vec<u64> = t
        .events
        .iter()
        .filter_map(|e| ok_call(e, ToolName::ReadChunk))
        .filter_map(|e| match &e.action {
            Action::Call { call, .. } => call.args.get("chunk_id").and_then(|v| v.as_u64()),
            Action::Invalid { .. } => None,
        })
        .collect();
    read_ids.sort_unstable();
    read_ids.dedup();

    let built = t
        .events
        .iter()
        .rev()
        .filter_map(|e| ok_call(e, ToolName::BuildIndex))
        .find_map(|e| {
            let content = &e.observation.as_ref()?.content;
            let rest = content.strip_prefix("index built: ")?;
            rest.split_whitespace().next()?.parse::<u64>().ok()
        });
    match built {
        Some(n) => read_ids == (0..n).collect::<Vec<u64>>(),
        None => false,
    }
}
