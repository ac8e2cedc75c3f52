use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wrangle_core::lifecycle::ApiCatalog;
use wrangle_core::metrics::codebleu;
use wrangle_core::parallel::{map_ordered, with_jobs};
use wrangle_core::pipeline::{mine, MineOptions};
use wrangle_core::replay::{CachedReplayer, ReplayCache};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../cli/tests/fixtures")
}

fn job_counts() -> Vec<usize> {
    let n = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    if n > 1 {
        vec![1, n]
    } else {
        vec![1]
    }
}

fn bench_mine(c: &mut Criterion) {
    let corpus = fixtures().join("corpus");
    let cache = ReplayCache::load(&fixtures().join("replay_cache.jsonl")).unwrap();
    let replayer = CachedReplayer::new(cache, None, None);
    let catalog = ApiCatalog::default();
    let opts = MineOptions::default();
    let mut group = c.benchmark_group("mine_fixture_corpus");
    group.sample_size(10);
    for jobs in job_counts() {
        group.bench_with_input(BenchmarkId::from_parameter(jobs), &jobs, |b, &jobs| {
            b.iter(|| {
                let out = tempfile::tempdir().unwrap();
                with_jobs(jobs, || mine(&corpus, out.path(), &catalog, &replayer, &opts))
            })
        });
    }
    group.finish();
}

fn bench_codebleu(c: &mut Criterion) {
    let text = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/oracle/snippets.json")).unwrap();
    let snippets: Vec<String> = serde_json::from_str(&text).unwrap();
    let pairs: Vec<(String, String)> = snippets.iter().zip(snippets.iter().cycle().skip(1)).map(|(a, b)| (a.clone(), b.clone())).collect();
    let mut group = c.benchmark_group("codebleu_snippet_pairs");
    for jobs in job_counts() {
        group.bench_with_input(BenchmarkId::from_parameter(jobs), &jobs, |b, &jobs| {
            b.iter(|| with_jobs(jobs, || map_ordered(&pairs, |(p, g)| codebleu(p, g).map(|s| s.score).unwrap_or(0.0))))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_mine, bench_codebleu);
criterion_main!(benches);
