//! Aggregate tool-usage statistics over trajectory batches: mean rounds,
//! memory operations (note/updateNote/readNote), deletions, and searches,
//! grouped by trajectory tag.

use std::collections::BTreeMap;

use super::trajectory::Trajectory;
use crate::tools::ToolName;

#[derive(Debug, Clone, PartialEq)]
pub struct UsageRow {
    pub tag: String,
    pub episodes: usize,
    pub rounds_mean: f64,
    pub mem_mean: f64,
    pub del_mean: f64,
    pub srh_mean: f64,
}

/// Per-tag means. Rows come out sorted by tag. Empty input yields an empty
/// table.
pub fn tool_usage_stats(trajectories: &[Trajectory]) -> Vec<UsageRow> {
    #[derive(Default)]
    struct Acc {
        n: usize,
        rounds: usize,
        mem: usize,
        del: usize,
        srh: usize,
    }

    let mut groups: BTreeMap<&str, Acc> = BTreeMap::new();
    for t in trajectories {
        let acc = groups.entry(t.tag.as_str()).or_default();
        acc.n += 1;
        acc.rounds += t.rounds();
        acc.mem += t.calls_to(ToolName::Note)
            + t.calls_to(ToolName::UpdateNote)
            + t.calls_to(ToolName::ReadNote);
        acc.del += t.calls_to(ToolName::DeleteContext);
        acc.srh += t.calls_to(ToolName::SearchEngine);
    }
    groups
        .into_iter()
        .map(|(tag, acc)| {
            let n = acc.n as f64;
            UsageRow {
                tag: tag.to_string(),
                episodes: acc.n,
                rounds_mean: acc.rounds as f64 / n,
                mem_mean: acc.mem as f64 / n,
                del_mean: acc.del as f64 / n,
                srh_mean: acc.srh as f64 / n,
            }
        })
        .collect()
}

/// Fixed-width text table with the usual column set.
pub fn format_usage_table(rows: &[UsageRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>6} {:>8} {:>8} {:>8} {:>8}\n",
        "tag", "n", "rounds", "mem", "del", "srh"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<24} {:>6} {:>8.1} {:>8.1} {:>8.1} {:>8.1}\n",
            r.tag, r.episodes, r.rounds_mean, r.mem_mean, r.del_mean, r.srh_mean
        ));
    }
    out
}
