//! Sample explosion throughput: replaying recorded trajectories into
//! training samples, sequential vs rayon.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use palimpsest::engine::{run_episode, Trajectory};
use palimpsest::forge::explode_samples;
use palimpsest::niah::{bench_config, generate_instance};
use palimpsest::parallel::{par_map, Parallelism};
use palimpsest::policy::{OraclePlan, OraclePolicy};

/// A batch of clean scan-and-prune trajectories to replay.
fn trajectories(n: usize) -> Vec<Trajectory> {
    let config = bench_config(4_000, 512);
    (0..n)
        .map(|i| {
            let position = i as f64 / (n - 1).max(1) as f64;
            let inst = generate_instance(4_000, position, i as u64);
            let plan = OraclePlan::linear(&inst.needle_key).with_chunk_size(512);
            let mut policy = OraclePolicy::new(plan, &config.tool_set).expect("plan fits");
            run_episode(
                &config,
                &mut policy,
                Arc::from(inst.haystack.as_str()),
                &inst.query,
                Some(&inst.needle_value),
            )
        })
        .collect()
}

fn explode_batch(c: &mut Criterion) {
    let trajs = trajectories(16);
    let mut group = c.benchmark_group("explode_batch");
    group.throughput(Throughput::Elements(trajs.len() as u64));
    group.sample_size(20);
    for (label, mode) in [
        ("sequential", Parallelism::Sequential),
        ("rayon", Parallelism::Rayon),
    ] {
        group.bench_with_input(BenchmarkId::from_parameter(label), &mode, |b, &mode| {
            b.iter(|| {
                let refs: Vec<&Trajectory> = trajs.iter().collect();
                let counts = par_map(mode, refs, |t| {
                    explode_samples(t).expect("recorded runs replay cleanly").len()
                });
                assert!(counts.iter().all(|&n| n > 0));
                counts
            })
        });
    }
    group.finish();
}

criterion_group!(benches, explode_batch);
criterion_main!(benches);
