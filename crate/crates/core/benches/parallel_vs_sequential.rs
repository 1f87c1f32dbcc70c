//! Rayon pool vs a single worker on the data-parallel kernels.
//!
//! Build with `--no-default-features` to time the fully sequential fallback
//! instead; the "pool" rows then run inline too.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use chef_core::dataio::{gaussian_blobs, synth_probabilistic_labels, BlobSpec, Dataset};
use chef_core::increm::build_provenance;
use chef_core::influence::{score_all, val_grad_product, EvalCounter};
use chef_core::model::{batch_gradient, train_sgd, ModelParams, TrainConfig};
use chef_core::numerics::{HvpOperator, LinearOperator, SolverConfig};
use chef_core::par::with_threads;

fn fixture() -> (Dataset, ModelParams) {
    let spec = BlobSpec::new(20_000, 32, 4, 3);
    let ds = synth_probabilistic_labels(&gaussian_blobs(&spec).unwrap(), 0.3, 3).unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 2000,
        ..TrainConfig::default()
    };
    let (params, _) = train_sgd(&ds, &cfg).unwrap();
    (ds, params)
}

fn schedules() -> Vec<(&'static str, usize)> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    vec![("sequential", 1), ("pool", threads)]
}

fn bench_kernels(c: &mut Criterion) {
    let (ds, params) = fixture();
    let gamma = 0.8;
    let solver = SolverConfig::default();
    let v = val_grad_product(&params, &ds, gamma, &solver).unwrap();
    let probe: Vec<f64> = (0..params.len()).map(|i| (i as f64 * 0.37).sin()).collect();

    let mut group = c.benchmark_group("batch_gradient");
    for (name, threads) in schedules() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &threads, |b, &t| {
            b.iter(|| with_threads(t, || batch_gradient(&params, &ds, ds.train_ids(), gamma)))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("objective_hvp");
    for (name, threads) in schedules() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &threads, |b, &t| {
            b.iter(|| {
                with_threads(t, || {
                    let op = HvpOperator::objective(&params, &ds, gamma);
                    black_box(op.apply(&probe))
                })
            })
        });
    }
    group.finish();

    let mut group = c.benchmark_group("score_all");
    for (name, threads) in schedules() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &threads, |b, &t| {
            b.iter(|| with_threads(t, || score_all(&v, &params, &ds, gamma, None, &EvalCounter::new()).unwrap()))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("build_provenance");
    group.sample_size(10);
    for (name, threads) in schedules() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &threads, |b, &t| {
            b.iter(|| with_threads(t, || build_provenance(&params, &ds, &solver).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_kernels);
criterion_main!(benches);
