//! Seed-sweep batch throughput, parallel fan-out against the sequential
//! fallback. Single runs are sequential by construction, so this is the one
//! place the `parallel` feature can pay off.

use criterion::{criterion_group, criterion_main, Criterion};
use wsnsim_core::runner::{run_batch, run_batch_sequential};
use wsnsim_core::Scenario;

fn seed_sweep(seeds: u64) -> Vec<Scenario> {
    (1..=seeds)
        .map(|seed| Scenario {
            node_count: 30,
            source_count: 3,
            sim_time_ticks: 20_000,
            seed,
            ..Scenario::default()
        })
        .collect()
}

fn bench_batch(c: &mut Criterion) {
    let scenarios = seed_sweep(8);
    let mut g = c.benchmark_group("batch_8_seeds_30_nodes");
    g.sample_size(10);
    g.bench_function("run_batch", |b| b.iter(|| run_batch(&scenarios).unwrap()));
    g.bench_function("run_batch_sequential", |b| {
        b.iter(|| run_batch_sequential(&scenarios).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench_batch);
criterion_main!(benches);
