//! Compares the rayon code paths against the same work pinned to a single
//! worker thread. Build with `--no-default-features` to bench the
//! sequential fallback itself.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mrf_spg::eval::{generate_ground_truth, sample_dataset, WeightBand};
use mrf_spg::exact;
use mrf_spg::gibbs::{grad_estimate, init_ensemble, InitMode};
use mrf_spg::optimizer::{run_spg, SpgConfig, TauStrategy};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("sequential", one), ("parallel", all)]
}

fn bench_grad_estimate(c: &mut Criterion) {
    let truth = generate_ground_truth(10, 0.3, WeightBand::default(), 1).unwrap();
    let moments = vec![0.5; truth.theta.m()];
    let mut group = c.benchmark_group("grad_estimate_p10_q2000_tau30");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                pool.install(|| {
                    let mut e = init_ensemble(2000, 10, InitMode::Uniform, 7, None, None).unwrap();
                    black_box(grad_estimate(&truth.theta, &moments, &mut e, 30).unwrap())
                })
            })
        });
    }
    group.finish();
}

fn bench_exact_moments(c: &mut Criterion) {
    let truth = generate_ground_truth(16, 0.3, WeightBand::default(), 2).unwrap();
    let mut group = c.benchmark_group("exact_moments_p16");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| black_box(exact::exact_moments(&truth.theta).unwrap())))
        });
    }
    group.finish();
}

fn bench_tay_run(c: &mut Criterion) {
    let truth = generate_ground_truth(10, 0.3, WeightBand::default(), 3).unwrap();
    let data = sample_dataset(&truth, 1000, 200, 3).unwrap();
    let cfg = SpgConfig {
        strategy: TauStrategy::Tay,
        max_iters: 5,
        master_seed: 3,
        ..SpgConfig::default()
    };
    let mut group = c.benchmark_group("tay_5_iterations_p10");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| black_box(run_spg(&data, &cfg).unwrap())))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_grad_estimate, bench_exact_moments, bench_tay_run);
criterion_main!(benches);
