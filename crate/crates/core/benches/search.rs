//! Index construction and retrieval throughput, sequential vs rayon.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use palimpsest::index::ChunkIndex;
use palimpsest::niah::generate_instance;
use palimpsest::parallel::{par_map, Parallelism};
use palimpsest::TokenCounter;

/// Seeded synthetic corpus of `words` whitespace tokens.
fn corpus(words: usize, seed: u64) -> String {
    generate_instance(words, 0.5, seed).haystack
}

const MODES: [(&str, Parallelism); 2] = [
    ("sequential", Parallelism::Sequential),
    ("rayon", Parallelism::Rayon),
];

fn index_build(c: &mut Criterion) {
    let counter = TokenCounter::Whitespace;
    let corpora: Vec<Arc<str>> = (0..8)
        .map(|i| Arc::from(corpus(50_000, i).as_str()))
        .collect();
    let mut group = c.benchmark_group("index_build");
    group.throughput(Throughput::Elements(corpora.len() as u64));
    group.sample_size(20);
    for (label, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(label), &mode, |b, &mode| {
            b.iter(|| {
                let chunk_counts = par_map(mode, corpora.clone(), |text| {
                    ChunkIndex::build(text, 2_048, &counter)
                        .expect("non-empty corpus")
                        .chunks()
                        .len()
                });
                assert!(chunk_counts.iter().all(|&n| n > 0));
                chunk_counts
            })
        });
    }
    group.finish();
}

fn query_batch(c: &mut Criterion) {
    let counter = TokenCounter::Whitespace;
    let text = corpus(200_000, 3);
    let queries: Vec<String> = text
        .split_whitespace()
        .step_by(997)
        .take(64)
        .map(str::to_owned)
        .collect();
    let index = ChunkIndex::build(text, 2_048, &counter).expect("non-empty corpus");
    let mut group = c.benchmark_group("query_batch");
    group.throughput(Throughput::Elements(queries.len() as u64));
    for (label, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(label), &mode, |b, &mode| {
            b.iter(|| {
                let hits: usize = par_map(mode, queries.clone(), |q| index.top_k(&q, 5).len())
                    .into_iter()
                    .sum();
                assert!(hits > 0, "common corpus words always hit");
                hits
            })
        });
    }
    group.finish();
}

criterion_group!(benches, index_build, query_batch);
criterion_main!(benches);
