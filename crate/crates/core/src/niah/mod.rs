//! Synthetic needle-in-a-haystack benchmark over extreme context lengths.
//!
//! An instance is a seeded haystack of neutral filler prose with exactly one
//! planted sentence — `The special magic number for {key} is {value}.` — and
//! a query asking for that value. [`BenchGrid`] spans a ladder of haystack
//! lengths (32K to 2M tokens by default) with needle depths spread across
//! each cell; [`run_grid`] executes one episode per instance and reports
//! per-length accuracy.
//!
//! Everything is derived from seeds: same grid, same instances, same bytes.
//! No third-party text is embedded, so generated sets are redistributable.

mod filler;

use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{run_episode, EpisodeConfig, EpisodeStatus, Policy, ScanMode};
use crate::forge::{ContainmentGrader, Grader};
use crate::parallel::{par_map, Parallelism};
use crate::policy::STATE_SYSTEM_PROMPT;
use crate::state::{Budgets, DeletionMode};
use crate::tools::ToolSet;

/// Context-length ladder of the standard grid, in whitespace tokens.
pub const STANDARD_LENGTHS: [usize; 8] = [
    32 * 1024,
    64 * 1024,
    128 * 1024,
    256 * 1024,
    512 * 1024,
    768 * 1024,
    1024 * 1024,
    2 * 1024 * 1024,
];

/// Words in the planted sentence.
const NEEDLE_WORDS: usize = 8;
const KEY_LEN: usize = 8;
const ALNUM: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";

/// One generated benchmark instance.
///
/// The haystack is stored separately from the metadata on disk (it can run
/// to megabytes), so it is skipped during serialization; [`read_instance`]
/// reunites the two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiahInstance {
    #[serde(skip)]
    pub haystack: String,
    pub needle_key: String,
    pub needle_value: String,
    /// Requested needle depth as a fraction of the haystack, in `[0, 1]`.
    pub insertion_position: f64,
    pub query: String,
    /// Requested haystack size in whitespace tokens; generation hits it
    /// exactly, comfortably inside the ±1% contract.
    pub target_length: usize,
}

impl NiahInstance {
    /// The planted sentence.
    pub fn needle(&self) -> String {
        format!(
            "The special magic number for {} is {}.",
            self.needle_key, self.needle_value
        )
    }

    /// Whitespace tokens preceding the planted sentence.
    pub fn tokens_before_needle(&self) -> usize {
        let at = self.haystack.find(&self.needle()).expect("needle present");
        self.haystack[..at].split_whitespace().count()
    }
}

fn rand_token(rng: &mut impl Rng, len: usize) -> String {
    (0..len)
        .map(|_| ALNUM[rng.random_range(0..ALNUM.len())] as char)
        .collect()
}

/// Builds one instance. Deterministic in `(target_length, position, seed)`.
///
/// The needle lands on the sentence boundary nearest the requested position
/// fraction, and the finished haystack counts exactly `target_length`
/// whitespace tokens. The key and value are drawn until both occur exactly
/// once in the haystack (a redraw is all but impossible, but the uniqueness
/// contract is checked, not assumed).
pub fn generate_instance(target_length: usize, position: f64, seed: u64) -> NiahInstance {
    assert!(
        (0.0..=1.0).contains(&position),
        "position is a fraction, got {position}"
    );
    assert!(
        target_length >= 2 * NEEDLE_WORDS,
        "target_length {target_length} leaves no room for filler"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sents = filler::sentences(&mut rng, target_length - NEEDLE_WORDS);

    // Sentence boundary whose preceding token count best matches the
    // requested fraction of the total.
    let mut best = (0usize, f64::INFINITY);
    let mut before = 0usize;
    for i in 0..=sents.len() {
        let err = (before as f64 / target_length as f64 - position).abs();
        if err < best.1 {
            best = (i, err);
        }
        if i < sents.len() {
            before += sents[i].split_whitespace().count();
        }
    }
    let at = best.0;

    loop {
        let key = rand_token(&mut rng, KEY_LEN);
        let value = rand_token(&mut rng, KEY_LEN);
        let needle = format!("The special magic number for {key} is {value}.");
        let haystack = assemble(&sents, &needle, at);
        if haystack.matches(&key).count() == 1 && haystack.matches(&value).count() == 1 {
            debug_assert_eq!(haystack.split_whitespace().count(), target_length);
            return NiahInstance {
                haystack,
                query: format!("What is the special magic number for {key}?"),
                needle_key: key,
                needle_value: value,
                insertion_position: position,
                target_length,
            };
        }
    }
}

/// Joins filler sentences with the needle spliced in at boundary `at`.
/// Paragraph breaks are whitespace, so they never disturb token counts.
fn assemble(sents: &[String], needle: &str, at: usize) -> String {
    let mut parts: Vec<&str> = Vec::with_capacity(sents.len() + 1);
    parts.extend(sents[..at].iter().map(String::as_str));
    parts.push(needle);
    parts.extend(sents[at..].iter().map(String::as_str));

    let bytes: usize = parts.iter().map(|p| p.len() + 2).sum();
    let mut out = String::with_capacity(bytes);
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            out.push_str(if i % 12 == 0 { "\n\n" } else { " " });
        }
        out.push_str(p);
    }
    out
}

/// Whether `answer` states the planted value, by normalized containment.
pub fn grade(instance: &NiahInstance, answer: &str) -> bool {
    let mut grader = ContainmentGrader;
    matches!(
        grader.grade(&instance.query, &instance.needle_value, answer),
        Ok(true)
    )
}

/// A ladder of haystack lengths with `instances_per_cell` needle depths per
/// length. Instance seeds derive from the grid seed, so the whole grid is
/// reproducible from these three fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchGrid {
    pub lengths: Vec<usize>,
    pub instances_per_cell: usize,
    pub seed: u64,
}

impl BenchGrid {
    pub fn standard(instances_per_cell: usize, seed: u64) -> Self {
        BenchGrid {
            lengths: STANDARD_LENGTHS.to_vec(),
            instances_per_cell,
            seed,
        }
    }

    /// All cell descriptors, in length-major order. Needle depths spread
    /// evenly over `[0, 1]` within each cell (a single instance sits at 0.5).
    pub fn cells(&self) -> Vec<CellSpec> {
        let mut out = Vec::with_capacity(self.lengths.len() * self.instances_per_cell);
        for &length in &self.lengths {
            for index in 0..self.instances_per_cell {
                out.push(CellSpec {
                    length,
                    index,
                    position: cell_position(index, self.instances_per_cell),
                    seed: derive_seed(self.seed, length, index),
                });
            }
        }
        out
    }
}

fn cell_position(index: usize, per_cell: usize) -> f64 {
    if per_cell <= 1 {
        0.5
    } else {
        index as f64 / (per_cell - 1) as f64
    }
}

/// splitmix64 finalizer over the cell coordinates: well-spread per-instance
/// seeds that stay stable when the grid grows.
fn derive_seed(grid_seed: u64, length: usize, index: usize) -> u64 {
    let mut z = grid_seed
        ^ (length as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One instance's coordinates within a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub length: usize,
    pub index: usize,
    pub position: f64,
    pub seed: u64,
}

/// Outcome of one episode over one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub spec: CellSpec,
    pub correct: bool,
    pub status: EpisodeStatus,
    pub final_answer: Option<String>,
    pub rounds: u32,
    /// Max visible-token count over the episode; the budget-honesty check.
    pub peak_visible_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cells: Vec<CellOutcome>,
}

impl GridResult {
    /// Mean accuracy per length, in first-seen length order.
    pub fn by_length(&self) -> Vec<(usize, f64)> {
        let mut order: Vec<usize> = Vec::new();
        for c in &self.cells {
            if !order.contains(&c.spec.length) {
                order.push(c.spec.length);
            }
        }
        order
            .into_iter()
            .map(|len| {
                let cell: Vec<&CellOutcome> =
                    self.cells.iter().filter(|c| c.spec.length == len).collect();
                let hits = cell.iter().filter(|c| c.correct).count();
                (len, hits as f64 / cell.len() as f64)
            })
            .collect()
    }

    pub fn overall(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        self.cells.iter().filter(|c| c.correct).count() as f64 / self.cells.len() as f64
    }

    pub fn peak_visible_tokens(&self) -> usize {
        self.cells
            .iter()
            .map(|c| c.peak_visible_tokens)
            .max()
            .unwrap_or(0)
    }

    /// Two-row accuracy table: length labels, then percent per length.
    pub fn format_table(&self) -> String {
        let mut header = format!("{:>8}", "length");
        let mut row = format!("{:>8}", "acc(%)");
        for (len, acc) in self.by_length() {
            header.push_str(&format!("{:>8}", length_label(len)));
            row.push_str(&format!("{:>8.1}", acc * 100.0));
        }
        format!("{header}\n{row}\n")
    }
}

/// `32K`-style label for a token count.
pub fn length_label(tokens: usize) -> String {
    const M: usize = 1024 * 1024;
    const K: usize = 1024;
    if tokens.is_multiple_of(M) {
        format!("{}M", tokens / M)
    } else if tokens.is_multiple_of(K) {
        format!("{}K", tokens / K)
    } else {
        tokens.to_string()
    }
}

/// Episode configuration for benchmark runs: 32K visible-token budget,
/// search disabled, tool-call-only deletion, linear-scan declaration, and a
/// rounds allowance sized for a full scan of the largest corpus.
pub fn bench_config(max_corpus_tokens: usize, chunk_size: usize) -> EpisodeConfig {
    let chunks = max_corpus_tokens.div_ceil(chunk_size.max(1)) as u32;
    let rounds = chunks * 2 + 24;
    EpisodeConfig {
        budgets: Budgets {
            token_budget: 32_000,
            rounds_budget: rounds,
            max_rounds: rounds + 50,
        },
        tool_set: ToolSet::without_search().with_deletion_mode(DeletionMode::ToolcallsOnly),
        system_block: STATE_SYSTEM_PROMPT.to_string(),
        declared_mode: Some(ScanMode::LinearScan),
        tag: "niah".into(),
        ..EpisodeConfig::default()
    }
}

/// Runs one episode per grid cell. Instances are generated on the fly from
/// cell seeds; `make_policy` builds a fresh policy per instance. Episodes
/// that do not finish simply count as incorrect.
pub fn run_grid<P, F>(
    grid: &BenchGrid,
    config: &EpisodeConfig,
    make_policy: F,
    mode: Parallelism,
) -> GridResult
where
    P: Policy,
    F: Fn(&NiahInstance) -> P + Send + Sync,
{
    let cells = par_map(mode, grid.cells(), |spec| {
        let inst = generate_instance(spec.length, spec.position, spec.seed);
        let mut policy = make_policy(&inst);
        let corpus: Arc<str> = Arc::from(inst.haystack.as_str());
        let t = run_episode(
            config,
            &mut policy,
            corpus,
            &inst.query,
            Some(&inst.needle_value),
        );
        let finished = t.status == EpisodeStatus::Finished;
        CellOutcome {
            spec,
            correct: finished && grade(&inst, t.final_answer.as_deref().unwrap_or("")),
            status: t.status,
            final_answer: t.final_answer,
            rounds: t.events.len() as u32,
            peak_visible_tokens: t
                .token_trace
                .iter()
                .map(|p| p.visible_tokens)
                .max()
                .unwrap_or(0),
        }
    });
    GridResult { cells }
}

#[derive(Debug, thiserror::Error)]
pub enum NiahIoError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("meta: {0}")]
    Json(#[from] serde_json::Error),
}

/// Manifest written next to a generated instance set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetManifest {
    pub grid: BenchGrid,
    pub entries: Vec<SetEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetEntry {
    pub stem: String,
    pub spec: CellSpec,
}

/// Writes `{stem}.txt` (haystack) and `{stem}.json` (metadata) under `dir`.
pub fn write_instance(dir: &Path, stem: &str, inst: &NiahInstance) -> Result<(), NiahIoError> {
    fs::write(dir.join(format!("{stem}.txt")), &inst.haystack)?;
    fs::write(
        dir.join(format!("{stem}.json")),
        serde_json::to_string_pretty(inst)?,
    )?;
    Ok(())
}

/// Reads an instance written by [`write_instance`].
pub fn read_instance(dir: &Path, stem: &str) -> Result<NiahInstance, NiahIoError> {
    let meta = fs::read_to_string(dir.join(format!("{stem}.json")))?;
    let mut inst: NiahInstance = serde_json::from_str(&meta)?;
    inst.haystack = fs::read_to_string(dir.join(format!("{stem}.txt")))?;
    Ok(inst)
}

/// Generates every instance of `grid` into `dir` plus a `manifest.json`.
/// Haystacks are written as they are produced, so peak memory stays at a
/// few instances regardless of grid size.
pub fn generate_set(
    dir: &Path,
    grid: &BenchGrid,
    mode: Parallelism,
) -> Result<SetManifest, NiahIoError> {
    fs::create_dir_all(dir)?;
    let entries = par_map(mode, grid.cells(), |spec| {
        let inst = generate_instance(spec.length, spec.position, spec.seed);
        let stem = format!(
            "len{}_{:02}",
            length_label(spec.length).to_lowercase(),
            spec.index
        );
        write_instance(dir, &stem, &inst)?;
        Ok(SetEntry { stem, spec })
    });
    let entries = entries
        .into_iter()
        .collect::<Result<Vec<_>, NiahIoError>>()?;
    let manifest = SetManifest {
        grid: grid.clone(),
        entries,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}
