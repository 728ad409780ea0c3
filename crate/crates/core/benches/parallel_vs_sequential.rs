use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use normsim_core::exec::Execution;
use normsim_core::game::Profile;
use normsim_core::harness::{run_experiment, ExperimentConfig, ExperimentKind};
use normsim_core::sanction::{feasibility_with, fixtures::pd_with_cost_levels};

fn modes() -> [(&'static str, Execution); 2] {
    [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel { jobs: None }),
    ]
}

fn experiment_grid(c: &mut Criterion) {
    let mut cfg = ExperimentConfig::new(ExperimentKind::SingleNonauthoritative);
    cfg.num_crops = vec![3, 5];
    cfg.num_background = vec![1, 3, 5];
    cfg.trials = 4;
    let mut group = c.benchmark_group("experiment_grid");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(run_experiment(&cfg, exec).unwrap().rows.len()))
        });
    }
    group.finish();
}

fn witness_search(c: &mut Criterion) {
    // Every cost is below the deviation gain, so the search scans all profiles.
    let costs: Vec<f64> = (1..=80).map(|k| 1.9 * k as f64 / 80.0).collect();
    let sg = pd_with_cost_levels(&costs);
    let target = Profile(vec![0, 0]);
    let mut group = c.benchmark_group("witness_search");
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(feasibility_with(&sg, &target, exec).unwrap().witness.is_none()))
        });
    }
    group.finish();
}

criterion_group!(benches, experiment_grid, witness_search);
criterion_main!(benches);
