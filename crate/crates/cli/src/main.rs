//! Command-line driver: run episodes, generate benchmarks, forge training
//! data, and summarize tool usage. Every command that writes an output
//! directory also writes the `run_manifest.json` that reproduces it.
//!
//! Exit codes: 0 success, 2 usage error, 3 dependency failure (endpoint,
//! grader, output IO), 4 episode aborted (budget or round limit).

mod commands;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use palimpsest::engine::{EpisodeConfig, ScanMode};
use palimpsest::parallel::{configure_threads, Parallelism};
use palimpsest::policy::{system_preset, RemoteEndpoint, SecretToken};
use palimpsest::state::DeletionMode;
use palimpsest::tools::ToolSet;
use palimpsest::{Budgets, TokenCounter};

const EXIT_USAGE: u8 = 2;
const EXIT_DEPENDENCY: u8 = 3;
const EXIT_ABORTED: u8 = 4;

#[derive(Debug)]
enum CliError {
    /// Bad flags, unreadable inputs, malformed config: exit 2.
    Usage(String),
    /// Remote endpoint, grader, or output filesystem failed: exit 3.
    Dependency(String),
    /// The episode ran but did not finish: exit 4.
    Aborted(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Dependency(m) => write!(f, "dependency failure: {m}"),
            CliError::Aborted(m) => write!(f, "episode aborted: {m}"),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Dependency(_) => EXIT_DEPENDENCY,
            CliError::Aborted(_) => EXIT_ABORTED,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "palimpsest", version, about = "Stateful context-editing agent runtime")]
struct Cli {
    /// TOML settings file; flags override it, it overrides built-in defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for batch commands; 1 forces sequential execution.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,
    /// Log chatter on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one episode over a corpus file and record its trajectory.
    Run(RunArgs),
    /// Generate a needle-in-a-haystack instance set on disk.
    GenNiah(GenNiahArgs),
    /// Run the scripted-oracle benchmark grid and print the accuracy table.
    RunGrid(RunGridArgs),
    /// Filter a trajectory directory and forge training samples.
    Forge(ForgeArgs),
    /// Tool-usage means over a trajectory directory, grouped by tag.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Corpus text file the episode works over.
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// User query opening the episode.
    #[arg(long)]
    query: String,
    /// Reference answer recorded on the trajectory for later grading.
    #[arg(long)]
    golden: Option<String>,
    /// What drives the episode: the scripted oracle or a remote model.
    #[arg(long, default_value = "oracle", value_parser = ["oracle", "remote"])]
    policy: String,
    /// Oracle reading strategy (ignored for remote runs).
    #[arg(long, default_value = "linear", value_parser = ["linear", "keyword"])]
    strategy: String,
    /// Truncation preset: the oracle stops reading after this many corpus
    /// tokens.
    #[arg(long, value_name = "TOKENS")]
    scan_limit: Option<usize>,
    /// Output directory (trajectory.json + run_manifest.json).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    episode: EpisodeFlags,
    #[command(flatten)]
    endpoint: EndpointFlags,
}

#[derive(Debug, Args)]
struct GenNiahArgs {
    /// Output directory for instance files and the set manifest.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Comma-separated corpus lengths in tokens (default: the standard
    /// ladder from 32K to 2M).
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<usize>>,
    /// Instances per length, spread across needle depths.
    #[arg(long, default_value_t = 5)]
    per_cell: usize,
    #[arg(long, default_value_t = 41)]
    seed: u64,
}

#[derive(Debug, Args)]
struct RunGridArgs {
    /// Comma-separated corpus lengths in tokens (default: the standard
    /// ladder from 32K to 2M).
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<usize>>,
    /// Instances per length, spread across needle depths.
    #[arg(long, default_value_t = 5)]
    per_cell: usize,
    #[arg(long, default_value_t = 41)]
    seed: u64,
    /// Chunk size the oracle reads with.
    #[arg(long, default_value_t = 12_000)]
    chunk_size: usize,
    /// Truncation preset applied to every cell's oracle.
    #[arg(long, value_name = "TOKENS")]
    scan_limit: Option<usize>,
    /// If set, write cells.json + run_manifest.json here.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, default_value = "table", value_parser = ["table", "json", "csv"])]
    format: String,
}

#[derive(Debug, Args)]
struct ForgeArgs {
    /// Directory of trajectory JSON files (non-trajectory files are skipped).
    #[arg(long, value_name = "DIR")]
    input: PathBuf,
    /// Output directory (samples.jsonl, report.json, run_manifest.json).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Answer grader; `judge` asks a remote model and needs endpoint flags.
    #[arg(long, default_value = "exact", value_parser = ["exact", "containment", "judge"])]
    grader: String,
    /// Per-action share cap for balancing, e.g. `--cap deleteContext=0.4`.
    /// Repeatable.
    #[arg(long = "cap", value_name = "ACTION=SHARE")]
    caps: Vec<String>,
    /// Seed for balance downsampling.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "table", value_parser = ["table", "json", "csv"])]
    format: String,
    #[command(flatten)]
    endpoint: EndpointFlags,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Directory of trajectory JSON files.
    #[arg(long, value_name = "DIR")]
    input: PathBuf,
    #[arg(long, default_value = "table", value_parser = ["table", "json", "csv"])]
    format: String,
}

/// Episode settings; unset flags fall back to the config file, then to the
/// library defaults.
#[derive(Debug, Args)]
struct EpisodeFlags {
    /// Visible-context token budget.
    #[arg(long)]
    budget: Option<usize>,
    /// Tool rounds before the episode is cut off.
    #[arg(long)]
    rounds: Option<u32>,
    /// Hard cap on loop iterations (>= rounds).
    #[arg(long)]
    max_rounds: Option<u32>,
    /// Disable the searchEngine tool.
    #[arg(long)]
    no_search: bool,
    /// How deleteContext treats assistant messages.
    #[arg(long, value_parser = ["full", "toolcalls_only"])]
    delete_mode: Option<String>,
    /// Built-in system prompt.
    #[arg(long, value_parser = ["state", "agentic"])]
    system_preset: Option<String>,
    /// Chunk size used when buildIndex omits one.
    #[arg(long)]
    chunk_size: Option<usize>,
    /// Grouping label recorded on the trajectory.
    #[arg(long)]
    tag: Option<String>,
    /// Scan mode recorded for process filtering (defaults to the oracle
    /// strategy on oracle runs).
    #[arg(long, value_parser = ["linear", "keyword"])]
    declared_mode: Option<String>,
    /// Token counting scheme.
    #[arg(long, value_parser = ["whitespace", "chars_div4"])]
    counter: Option<String>,
}

/// Remote endpoint settings; same flag > file > default precedence. The
/// bearer token is only ever read from the environment.
#[derive(Debug, Args)]
struct EndpointFlags {
    /// Chat-completions base URL, up to but excluding `/chat/completions`.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name sent with each request.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    top_k: Option<u32>,
    /// Name of the environment variable holding the bearer token.
    #[arg(long, value_name = "VAR")]
    auth_env: Option<String>,
}

// --- config file -------------------------------------------------------

#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    episode: FileEpisode,
    #[serde(default)]
    endpoint: FileEndpoint,
}

#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEpisode {
    token_budget: Option<usize>,
    rounds_budget: Option<u32>,
    max_rounds: Option<u32>,
    no_search: Option<bool>,
    delete_mode: Option<String>,
    system_preset: Option<String>,
    system_block: Option<String>,
    chunk_size: Option<usize>,
    tag: Option<String>,
    declared_mode: Option<String>,
    counter: Option<String>,
}

#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEndpoint {
    base_url: Option<String>,
    model: Option<String>,
    temperature: Option<f64>,
    top_p: Option<f64>,
    top_k: Option<u32>,
    auth_env: Option<String>,
}

fn load_file_config(path: Option<&PathBuf>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
}

/// Flags beat the file, the file beats library defaults.
fn resolve_episode(flags: &EpisodeFlags, file: &FileEpisode) -> Result<EpisodeConfig, CliError> {
    let defaults = Budgets::default();
    let budgets = Budgets {
        token_budget: flags.budget.or(file.token_budget).unwrap_or(defaults.token_budget),
        rounds_budget: flags.rounds.or(file.rounds_budget).unwrap_or(defaults.rounds_budget),
        max_rounds: flags.max_rounds.or(file.max_rounds).unwrap_or(defaults.max_rounds),
    };
    if budgets.max_rounds < budgets.rounds_budget {
        return Err(CliError::Usage(format!(
            "--max-rounds {} below --rounds {}",
            budgets.max_rounds, budgets.rounds_budget
        )));
    }

    let no_search = flags.no_search || file.no_search.unwrap_or(false);
    let mut tool_set = if no_search { ToolSet::without_search() } else { ToolSet::full() };
    if let Some(mode) = flags.delete_mode.as_deref().or(file.delete_mode.as_deref()) {
        tool_set = tool_set.with_deletion_mode(match mode {
            "full" => DeletionMode::Full,
            "toolcalls_only" => DeletionMode::ToolcallsOnly,
            other => return Err(CliError::Usage(format!("unknown delete_mode {other:?}"))),
        });
    }

    // A literal system_block in the file outranks a preset name.
    let system_block = match (
        flags.system_preset.as_deref().or(file.system_preset.as_deref()),
        file.system_block.as_deref(),
    ) {
        (Some(name), _) if flags.system_preset.is_some() => preset_text(name)?,
        (_, Some(block)) => block.to_string(),
        (Some(name), None) => preset_text(name)?,
        (None, None) => preset_text("state")?,
    };

    let declared_mode = match flags.declared_mode.as_deref().or(file.declared_mode.as_deref()) {
        None => None,
        Some("linear") => Some(ScanMode::LinearScan),
        Some("keyword") => Some(ScanMode::KeywordSearch),
        Some(other) => return Err(CliError::Usage(format!("unknown declared_mode {other:?}"))),
    };
    let counter = match flags.counter.as_deref().or(file.counter.as_deref()) {
        None | Some("whitespace") => TokenCounter::Whitespace,
        Some("chars_div4") => TokenCounter::CharsDiv4,
        Some(other) => return Err(CliError::Usage(format!("unknown counter {other:?}"))),
    };

    Ok(EpisodeConfig {
        budgets,
        tool_set,
        system_block,
        counter,
        default_chunk_size: flags
            .chunk_size
            .or(file.chunk_size)
            .unwrap_or_else(|| EpisodeConfig::default().default_chunk_size),
        tag: flags
            .tag
            .clone()
            .or_else(|| file.tag.clone())
            .unwrap_or_else(|| EpisodeConfig::default().tag),
        declared_mode,
        ..EpisodeConfig::default()
    })
}

fn preset_text(name: &str) -> Result<String, CliError> {
    system_preset(name)
        .map(str::to_string)
        .ok_or_else(|| CliError::Usage(format!("unknown system preset {name:?}")))
}

/// Builds the endpoint or explains which flag is missing. Returns the auth
/// env var name alongside so manifests can record it (never the token).
fn resolve_endpoint(
    flags: &EndpointFlags,
    file: &FileEndpoint,
) -> Result<(RemoteEndpoint, Option<String>), CliError> {
    let base_url = flags
        .endpoint
        .clone()
        .or_else(|| file.base_url.clone())
        .ok_or_else(|| CliError::Usage("remote policy needs --endpoint".into()))?;
    let model = flags
        .model
        .clone()
        .or_else(|| file.model.clone())
        .ok_or_else(|| CliError::Usage("remote policy needs --model".into()))?;
    let mut endpoint = RemoteEndpoint::new(base_url, model);
    if let Some(t) = flags.temperature.or(file.temperature) {
        endpoint.sampling.temperature = t;
    }
    if let Some(p) = flags.top_p.or(file.top_p) {
        endpoint.sampling.top_p = p;
    }
    if let Some(k) = flags.top_k.or(file.top_k) {
        endpoint.sampling.top_k = k;
    }
    let auth_env = flags.auth_env.clone().or_else(|| file.auth_env.clone());
    if let Some(var) = &auth_env {
        let token = SecretToken::from_env(var)
            .ok_or_else(|| CliError::Usage(format!("auth env var {var} is unset or empty")))?;
        endpoint = endpoint.with_auth(token);
    }
    Ok((endpoint, auth_env))
}

fn parallelism(jobs: Option<u16>) -> Parallelism {
    match jobs {
        Some(1) => Parallelism::Sequential,
        Some(n) => {
            if !configure_threads(n as usize) {
                log::warn!("worker pool already started; --jobs {n} ignored");
            }
            Parallelism::Rayon
        }
        None => Parallelism::default(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        })
        .init();

    let file = match load_file_config(cli.config.as_ref()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.code());
        }
    };
    let mode = parallelism(cli.jobs);

    let result = match &cli.command {
        Command::Run(args) => commands::run(args, &file),
        Command::GenNiah(args) => commands::gen_niah(args, mode),
        Command::RunGrid(args) => commands::run_grid(args, mode),
        Command::Forge(args) => commands::forge(args, &file),
        Command::Stats(args) => commands::stats(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
