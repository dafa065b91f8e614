//! End-to-end runs of the binary: every subcommand, the exit-code contract,
//! config-file precedence, and the manifest trail.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

use palimpsest::engine::{EpisodeStatus, Trajectory};
use palimpsest::tools::ToolName;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_palimpsest"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    out
}

/// ~1500 filler words with one planted sentence, three chunks at size 512.
fn write_corpus(dir: &Path) -> std::path::PathBuf {
    let mut words: Vec<String> = (0..1_500).map(|i| format!("word{i}")).collect();
    words.insert(700, "The special magic number for zkey is 4711.".into());
    let path = dir.join("corpus.txt");
    fs::write(&path, words.join(" ")).unwrap();
    path
}

const QUERY: &str = "What is the special magic number for zkey?";

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn oracle_run_writes_trajectory_and_manifest() {
    let dir = TempDir::new().unwrap();
    let corpus = write_corpus(dir.path());
    let out_dir = dir.path().join("out");

    let out = run_ok(bin()
        .args(["run", "--corpus"])
        .arg(&corpus)
        .args(["--query", QUERY, "--golden", "4711", "--chunk-size", "512", "--no-search"])
        .arg("--out")
        .arg(&out_dir));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("status=finished"), "{stdout}");
    assert!(stdout.contains("answer=4711"), "{stdout}");

    let t: Trajectory =
        serde_json::from_str(&fs::read_to_string(out_dir.join("trajectory.json")).unwrap())
            .unwrap();
    assert_eq!(t.status, EpisodeStatus::Finished);
    assert_eq!(t.final_answer.as_deref(), Some("4711"));
    // --no-search means the run contains zero searchEngine events.
    assert_eq!(t.calls_to(ToolName::SearchEngine), 0);

    let manifest = read_json(&out_dir.join("run_manifest.json"));
    assert_eq!(manifest["command"][1], "run");
    let digest = Sha256::digest(fs::read(&corpus).unwrap());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(
        manifest["input_hashes"][corpus.display().to_string()],
        Value::String(hex),
        "manifest records the corpus hash"
    );
    let outputs: Vec<&str> = manifest["output_paths"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert!(outputs.contains(&"trajectory.json"));
    assert!(outputs.contains(&"run_manifest.json"));
    assert_eq!(manifest["config"]["episode"]["budgets"]["token_budget"], 32_000);
}

#[test]
fn missing_corpus_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = bin()
        .args(["run", "--corpus", "/definitely/not/here.txt", "--query", QUERY])
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("usage error"), "{stderr}");
}

#[test]
fn unknown_flags_exit_2() {
    let out = bin().args(["run", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn aborted_episode_exits_4_but_still_records() {
    let dir = TempDir::new().unwrap();
    let corpus = write_corpus(dir.path());
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "--corpus"])
        .arg(&corpus)
        .args(["--query", QUERY, "--chunk-size", "512"])
        .args(["--rounds", "1", "--max-rounds", "1"])
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let t: Trajectory =
        serde_json::from_str(&fs::read_to_string(out_dir.join("trajectory.json")).unwrap())
            .unwrap();
    assert_eq!(t.status, EpisodeStatus::RoundsExceeded);
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let dir = TempDir::new().unwrap();
    let corpus = write_corpus(dir.path());
    let config = dir.path().join("settings.toml");
    fs::write(
        &config,
        "[episode]\ntoken_budget = 64000\ntag = \"from-file\"\nchunk_size = 512\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");

    run_ok(bin()
        .args(["run", "--corpus"])
        .arg(&corpus)
        .args(["--query", QUERY, "--budget", "48000"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_dir));

    let t: Trajectory =
        serde_json::from_str(&fs::read_to_string(out_dir.join("trajectory.json")).unwrap())
            .unwrap();
    assert_eq!(t.tag, "from-file", "unflagged settings come from the file");
    let manifest = read_json(&out_dir.join("run_manifest.json"));
    assert_eq!(
        manifest["config"]["episode"]["budgets"]["token_budget"], 48_000,
        "the flag beats the file"
    );
}

#[test]
fn malformed_config_key_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("settings.toml");
    fs::write(&config, "[episode]\ntoken_buget = 1\n").unwrap();
    let out = bin()
        .args(["stats", "--input"])
        .arg(dir.path())
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stats_summarizes_a_trajectory_directory() {
    let dir = TempDir::new().unwrap();
    let corpus = write_corpus(dir.path());
    let out_dir = dir.path().join("out");
    run_ok(bin()
        .args(["run", "--corpus"])
        .arg(&corpus)
        .args(["--query", QUERY, "--chunk-size", "512", "--tag", "smoke"])
        .arg("--out")
        .arg(&out_dir));

    let out = run_ok(bin().args(["stats", "--input"]).arg(&out_dir));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().next().unwrap().starts_with("tag"), "{stdout}");
    assert!(stdout.contains("smoke"), "{stdout}");

    let csv = run_ok(bin().args(["stats", "--format", "csv", "--input"]).arg(&out_dir));
    let csv = String::from_utf8(csv.stdout).unwrap();
    assert!(csv.starts_with("tag,episodes,rounds_mean"), "{csv}");

    // Empty directory: still exit 0, empty table.
    let empty = dir.path().join("nothing");
    fs::create_dir(&empty).unwrap();
    run_ok(bin().args(["stats", "--input"]).arg(&empty));
}

#[test]
fn forge_emits_samples_report_and_manifest() {
    let dir = TempDir::new().unwrap();
    let corpus = write_corpus(dir.path());
    let traj_dir = dir.path().join("trajs");
    run_ok(bin()
        .args(["run", "--corpus"])
        .arg(&corpus)
        .args(["--query", QUERY, "--golden", "4711", "--chunk-size", "512"])
        .arg("--out")
        .arg(&traj_dir));

    let forge_dir = dir.path().join("forged");
    let out = run_ok(bin()
        .args(["forge", "--input"])
        .arg(&traj_dir)
        .arg("--out")
        .arg(&forge_dir));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("outcome_filter"), "{stdout}");

    let t: Trajectory =
        serde_json::from_str(&fs::read_to_string(traj_dir.join("trajectory.json")).unwrap())
            .unwrap();
    let samples = fs::read_to_string(forge_dir.join("samples.jsonl")).unwrap();
    assert_eq!(
        samples.lines().count(),
        t.events.len(),
        "the tidy oracle run survives both filters and explodes 1:1"
    );
    let report = read_json(&forge_dir.join("report.json"));
    assert_eq!(report["filter"]["total"], 1);
    assert_eq!(report["filter"]["process_pass"], 1);
    assert!(forge_dir.join("run_manifest.json").exists());

    // Forging an empty directory is a no-op, not an error.
    let empty = dir.path().join("none");
    fs::create_dir(&empty).unwrap();
    let out = run_ok(bin()
        .args(["forge", "--input"])
        .arg(&empty)
        .arg("--out")
        .arg(dir.path().join("forged-empty")));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let row = stdout.lines().nth(1).unwrap_or_default();
    assert!(row.trim_start().starts_with('0'), "{stdout}");
}

#[test]
fn gen_niah_then_grid_runs_clean() {
    let dir = TempDir::new().unwrap();
    let set_dir = dir.path().join("set");
    let out = run_ok(bin()
        .args(["gen-niah", "--lengths", "2000", "--per-cell", "2", "--seed", "7"])
        .arg("--out")
        .arg(&set_dir));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("wrote 2 instances"), "{stdout}");
    assert!(set_dir.join("manifest.json").exists());
    assert!(set_dir.join("run_manifest.json").exists());
    let texts = fs::read_dir(&set_dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "txt"))
        .count();
    assert_eq!(texts, 2);

    let grid_dir = dir.path().join("grid");
    let out = run_ok(bin()
        .args(["run-grid", "--lengths", "2000,3000", "--per-cell", "2", "--seed", "7"])
        .args(["--chunk-size", "512", "--jobs", "1"])
        .arg("--out")
        .arg(&grid_dir));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("acc(%)"), "{stdout}");
    assert!(stdout.contains("overall 100.0%"), "{stdout}");
    let cells = read_json(&grid_dir.join("cells.json"));
    assert_eq!(cells["cells"].as_array().unwrap().len(), 4);
    assert!(grid_dir.join("run_manifest.json").exists());
}

#[test]
fn grid_truncation_preset_misses_deep_needles() {
    let out = run_ok(bin().args([
        "run-grid",
        "--lengths",
        "3000",
        "--per-cell",
        "2",
        "--seed",
        "7",
        "--chunk-size",
        "512",
        "--scan-limit",
        "512",
        "--format",
        "csv",
        "--jobs",
        "1",
    ]));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "{stdout}");
    // Depth 0 sits inside the readable prefix, depth 1 beyond it.
    assert!(rows[0].contains(",true,"), "{stdout}");
    assert!(rows[1].contains(",false,"), "{stdout}");
}
