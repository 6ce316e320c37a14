use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pta_core::harness::{simulate_batch, simulate_batch_sequential, LearnerPolicy};
use pta_core::scenario::reference_scenario;
use std::hint::black_box;
use std::sync::Arc;

fn batch(c: &mut Criterion) {
    let scenario = Arc::new(reference_scenario());
    let policy = LearnerPolicy::builtin("random").unwrap();
    let mut group = c.benchmark_group("simulate_batch");
    group.sample_size(10);
    for runs in [16u64, 64] {
        let seeds: Vec<u64> = (0..runs).collect();
        group.bench_with_input(BenchmarkId::new("parallel", runs), &seeds, |b, seeds| {
            b.iter(|| simulate_batch(scenario.clone(), &policy, black_box(seeds), 400))
        });
        group.bench_with_input(BenchmarkId::new("sequential", runs), &seeds, |b, seeds| {
            b.iter(|| simulate_batch_sequential(scenario.clone(), &policy, black_box(seeds), 400))
        });
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
