//! The five subcommands. Each one that writes an output directory drops a
//! `run_manifest.json` beside its artifacts: argv, resolved settings, seeds,
//! input hashes, and output names — enough to re-run the command exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use palimpsest::engine::{
    format_usage_table, run_episode, tool_usage_stats, EpisodeStatus, Policy, Trajectory,
};
use palimpsest::forge::{
    forge_samples, write_samples_jsonl, ContainmentGrader, ExactGrader, ForgeError, Grader,
    JudgeGrader, ProcessRules,
};
use palimpsest::niah::{self, BenchGrid, GridResult, NiahInstance, STANDARD_LENGTHS};
use palimpsest::parallel::Parallelism;
use palimpsest::policy::{OraclePlan, OraclePolicy, RemotePolicy};

use crate::{
    resolve_endpoint, resolve_episode, CliError, FileConfig, ForgeArgs, GenNiahArgs, RunArgs,
    RunGridArgs, StatsArgs,
};

#[derive(Debug, serde::Serialize)]
struct RunManifest {
    /// argv as invoked.
    command: Vec<String>,
    version: String,
    /// Fully resolved settings after flag/file/default merging. Never
    /// contains credentials, only the name of the env var holding them.
    config: Value,
    seeds: Vec<u64>,
    /// sha256 of every input file consumed, keyed by path.
    input_hashes: BTreeMap<String, String>,
    /// Files written, relative to this manifest's directory.
    output_paths: Vec<String>,
}

impl RunManifest {
    fn new(config: Value, seeds: Vec<u64>) -> Self {
        RunManifest {
            command: std::env::args().collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds,
            input_hashes: BTreeMap::new(),
            output_paths: Vec::new(),
        }
    }

    fn hash_input(&mut self, path: &Path, bytes: &[u8]) {
        let digest = Sha256::digest(bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.input_hashes.insert(path.display().to_string(), hex);
    }

    fn write(mut self, dir: &Path) -> Result<(), CliError> {
        self.output_paths.push("run_manifest.json".into());
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        write_output(&dir.join("run_manifest.json"), &text)
    }
}

fn write_output(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::Dependency(format!("cannot write {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Dependency(format!("cannot create {}: {e}", dir.display())))
}

/// Loads every `*.json` in `dir` that parses as a trajectory, in path order.
/// Other JSON files (manifests, reports) are skipped with a debug note.
fn load_trajectories(dir: &Path) -> Result<Vec<Trajectory>, CliError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let text = fs::read_to_string(&p)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
        match serde_json::from_str::<Trajectory>(&text) {
            Ok(t) => out.push(t),
            Err(e) => log::debug!("skipping {}: {e}", p.display()),
        }
    }
    Ok(out)
}

// --- run -----------------------------------------------------------------

pub fn run(args: &RunArgs, file: &FileConfig) -> Result<(), CliError> {
    let config = resolve_episode(&args.episode, &file.episode)?;
    let corpus_text = fs::read_to_string(&args.corpus)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.corpus.display())))?;
    if args.query.trim().is_empty() {
        return Err(CliError::Usage("--query must be non-empty".into()));
    }

    let mut config = config;
    let mut policy_desc = json!({"policy": args.policy});
    let mut policy: Box<dyn Policy> = match args.policy.as_str() {
        "oracle" => {
            let key = OraclePlan::key_from_query(&args.query).ok_or_else(|| {
                CliError::Usage(
                    "oracle runs need a query naming a key: `... for <key>?`".into(),
                )
            })?;
            let mut plan = match args.strategy.as_str() {
                "linear" => OraclePlan::linear(key),
                _ => OraclePlan::keyword(key),
            }
            .with_chunk_size(config.default_chunk_size);
            if let Some(limit) = args.scan_limit {
                plan = plan.with_scan_token_limit(limit);
            }
            // Oracle runs default to declaring their own strategy so the
            // process filter can check them.
            if config.declared_mode.is_none() {
                config.declared_mode = Some(plan.strategy.scan_mode());
            }
            policy_desc["strategy"] = json!(args.strategy);
            policy_desc["scan_limit"] = json!(args.scan_limit);
            let oracle = OraclePolicy::new(plan, &config.tool_set)
                .map_err(|e| CliError::Usage(format!("oracle plan rejected: {e}")))?;
            Box::new(oracle)
        }
        _ => {
            let (endpoint, auth_env) = resolve_endpoint(&args.endpoint, &file.endpoint)?;
            policy_desc["endpoint"] = json!({
                "base_url": endpoint.base_url,
                "model": endpoint.model,
                "temperature": endpoint.sampling.temperature,
                "top_p": endpoint.sampling.top_p,
                "top_k": endpoint.sampling.top_k,
                "auth_env": auth_env,
            });
            Box::new(RemotePolicy::new(endpoint))
        }
    };

    let trajectory = run_episode(
        &config,
        policy.as_mut(),
        Arc::from(corpus_text.as_str()),
        &args.query,
        args.golden.as_deref(),
    );

    ensure_dir(&args.out)?;
    let mut manifest = RunManifest::new(
        json!({
            "episode": config.snapshot(),
            "policy": policy_desc,
            "query": args.query,
            "golden": args.golden,
            "tag": config.tag,
            "declared_mode": config.declared_mode,
        }),
        vec![],
    );
    manifest.hash_input(&args.corpus, corpus_text.as_bytes());
    manifest.output_paths.push("trajectory.json".into());
    let traj_json = serde_json::to_string_pretty(&trajectory).expect("trajectory serializes");
    write_output(&args.out.join("trajectory.json"), &traj_json)?;
    manifest.write(&args.out)?;

    let peak = trajectory
        .token_trace
        .iter()
        .map(|p| p.visible_tokens)
        .max()
        .unwrap_or(0);
    println!(
        "status={} rounds={} peak_visible_tokens={peak} answer={}",
        trajectory.status.as_str(),
        trajectory.events.len(),
        trajectory.final_answer.as_deref().unwrap_or("-"),
    );

    match trajectory.status {
        EpisodeStatus::Finished => Ok(()),
        EpisodeStatus::ProtocolError => Err(CliError::Dependency(
            "policy failed the tool-calling protocol".into(),
        )),
        status => Err(CliError::Aborted(format!("episode ended {}", status.as_str()))),
    }
}

// --- gen-niah ---------------------------------------------------------------

fn build_grid(lengths: &Option<Vec<usize>>, per_cell: usize, seed: u64) -> Result<BenchGrid, CliError> {
    let lengths = lengths.clone().unwrap_or_else(|| STANDARD_LENGTHS.to_vec());
    if lengths.is_empty() || per_cell == 0 {
        return Err(CliError::Usage("need at least one length and one instance per cell".into()));
    }
    Ok(BenchGrid { lengths, instances_per_cell: per_cell, seed })
}

pub fn gen_niah(args: &GenNiahArgs, mode: Parallelism) -> Result<(), CliError> {
    let grid = build_grid(&args.lengths, args.per_cell, args.seed)?;
    ensure_dir(&args.out)?;
    let set = niah::generate_set(&args.out, &grid, mode)
        .map_err(|e| CliError::Dependency(format!("cannot write instance set: {e}")))?;

    let mut manifest = RunManifest::new(json!({"grid": grid}), vec![grid.seed]);
    manifest.output_paths.push("manifest.json".into());
    for entry in &set.entries {
        manifest.output_paths.push(format!("{}.txt", entry.stem));
        manifest.output_paths.push(format!("{}.json", entry.stem));
    }
    manifest.write(&args.out)?;
    println!(
        "wrote {} instances across {} lengths to {}",
        set.entries.len(),
        grid.lengths.len(),
        args.out.display()
    );
    Ok(())
}

// --- run-grid -----------------------------------------------------------------

fn grid_csv(result: &GridResult) -> String {
    let mut out = String::from("length,index,position,seed,correct,status,rounds,peak_visible_tokens\n");
    for c in &result.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            c.spec.length,
            c.spec.index,
            c.spec.position,
            c.spec.seed,
            c.correct,
            c.status.as_str(),
            c.rounds,
            c.peak_visible_tokens,
        ));
    }
    out
}

pub fn run_grid(args: &RunGridArgs, mode: Parallelism) -> Result<(), CliError> {
    let grid = build_grid(&args.lengths, args.per_cell, args.seed)?;
    let max_len = *grid.lengths.iter().max().expect("non-empty");
    let config = niah::bench_config(max_len, args.chunk_size);

    let result = niah::run_grid(
        &grid,
        &config,
        |inst: &NiahInstance| {
            let mut plan = OraclePlan::linear(&inst.needle_key).with_chunk_size(args.chunk_size);
            if let Some(limit) = args.scan_limit {
                plan = plan.with_scan_token_limit(limit);
            }
            OraclePolicy::new(plan, &config.tool_set).expect("linear plan always fits")
        },
        mode,
    );

    match args.format.as_str() {
        "json" => println!("{}", serde_json::to_string_pretty(&result).expect("serializes")),
        "csv" => print!("{}", grid_csv(&result)),
        _ => {
            print!("{}", result.format_table());
            println!(
                "overall {:.1}%  peak_visible_tokens {}",
                result.overall() * 100.0,
                result.peak_visible_tokens()
            );
        }
    }

    if let Some(out) = &args.out {
        ensure_dir(out)?;
        let mut manifest = RunManifest::new(
            json!({
                "grid": grid,
                "chunk_size": args.chunk_size,
                "scan_limit": args.scan_limit,
                "episode": config.snapshot(),
            }),
            vec![grid.seed],
        );
        manifest.output_paths.push("cells.json".into());
        let cells = serde_json::to_string_pretty(&result).expect("serializes");
        write_output(&out.join("cells.json"), &cells)?;
        manifest.write(out)?;
    }
    Ok(())
}

// --- forge ----------------------------------------------------------------------

fn parse_caps(raw: &[String]) -> Result<BTreeMap<String, f64>, CliError> {
    let mut caps = BTreeMap::new();
    for item in raw {
        let (action, share) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--cap wants ACTION=SHARE, got {item:?}")))?;
        let share: f64 = share
            .parse()
            .map_err(|_| CliError::Usage(format!("--cap share {share:?} is not a number")))?;
        if !(0.0..=1.0).contains(&share) {
            return Err(CliError::Usage(format!("--cap share {share} outside [0, 1]")));
        }
        caps.insert(action.to_string(), share);
    }
    Ok(caps)
}

pub fn forge(args: &ForgeArgs, file: &FileConfig) -> Result<(), CliError> {
    let trajectories = load_trajectories(&args.input)?;
    let caps = parse_caps(&args.caps)?;
    let mut grader: Box<dyn Grader> = match args.grader.as_str() {
        "exact" => Box::new(ExactGrader),
        "containment" => Box::new(ContainmentGrader),
        _ => {
            let (endpoint, _) = resolve_endpoint(&args.endpoint, &file.endpoint)?;
            Box::new(JudgeGrader::new(endpoint))
        }
    };

    let (samples, report, balance) = forge_samples(
        &trajectories,
        grader.as_mut(),
        &ProcessRules::default(),
        &caps,
        args.seed,
    )
    .map_err(|e| match e {
        ForgeError::Grader(g) => CliError::Dependency(format!("grader unavailable: {g}")),
        ForgeError::Replay(r) => CliError::Usage(format!("inconsistent trajectory: {r}")),
    })?;

    ensure_dir(&args.out)?;
    write_samples_jsonl(&args.out.join("samples.jsonl"), &samples)
        .map_err(|e| CliError::Dependency(format!("cannot write samples: {e}")))?;
    let report_json = json!({"filter": report, "balance": balance});
    write_output(
        &args.out.join("report.json"),
        &serde_json::to_string_pretty(&report_json).expect("serializes"),
    )?;
    let mut manifest = RunManifest::new(
        json!({
            "input": args.input.display().to_string(),
            "grader": args.grader,
            "caps": caps,
            "trajectories": trajectories.len(),
        }),
        vec![args.seed],
    );
    manifest.output_paths.push("samples.jsonl".into());
    manifest.output_paths.push("report.json".into());
    manifest.write(&args.out)?;

    match args.format.as_str() {
        "json" => println!("{}", serde_json::to_string_pretty(&report_json).expect("serializes")),
        "csv" => println!(
            "total,outcome_pass,process_pass,samples_before_balance,samples_after_balance\n{},{},{},{},{}",
            report.total,
            report.outcome_pass,
            report.process_pass,
            report.samples_before_balance,
            report.samples_after_balance,
        ),
        _ => print!("{}", report.format_table()),
    }
    Ok(())
}

// --- stats ------------------------------------------------------------------------

pub fn stats(args: &StatsArgs) -> Result<(), CliError> {
    let trajectories = load_trajectories(&args.input)?;
    let rows = tool_usage_stats(&trajectories);
    match args.format.as_str() {
        "json" => {
            let rows: Vec<Value> = rows
                .iter()
                .map(|r| {
                    json!({
                        "tag": r.tag,
                        "episodes": r.episodes,
                        "rounds_mean": r.rounds_mean,
                        "mem_mean": r.mem_mean,
                        "del_mean": r.del_mean,
                        "srh_mean": r.srh_mean,
                    })
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&rows).expect("serializes"));
        }
        "csv" => {
            let mut out = String::from("tag,episodes,rounds_mean,mem_mean,del_mean,srh_mean\n");
            for r in &rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.tag, r.episodes, r.rounds_mean, r.mem_mean, r.del_mean, r.srh_mean
                ));
            }
            print!("{out}");
        }
        _ => print!("{}", format_usage_table(&rows)),
    }
    Ok(())
}
