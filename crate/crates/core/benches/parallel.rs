use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dynsyn::plant::builtin_model;
use dynsyn::synergy::{extract, generate_trajectories, GroupingSettings, PerturbationConfig};
use dynsyn::Parallelism;

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel)];

fn trajectories(c: &mut Criterion) {
    let model = builtin_model("arm2x6").unwrap();
    let config = PerturbationConfig {
        total_steps: 20_000,
        ..PerturbationConfig::default()
    };
    let seeds: Vec<u64> = (0..8).collect();
    let mut group = c.benchmark_group("trajectories");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| generate_trajectories(&model, &config, &seeds, mode).unwrap())
        });
    }
    group.finish();
}

fn extraction(c: &mut Criterion) {
    let model = builtin_model("arm2x6-mirrored").unwrap();
    let config = PerturbationConfig {
        total_steps: 10_000,
        ..PerturbationConfig::default()
    };
    let seeds: Vec<u64> = (0..4).collect();
    let settings = GroupingSettings::default();
    let mut group = c.benchmark_group("extract");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| extract(&model, &config, &seeds, &settings, mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, trajectories, extraction);
criterion_main!(benches);
