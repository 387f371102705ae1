use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ubsr_bench::synthetic_regression;
use ubsr_core::estimator::sample_bracket;
use ubsr_core::lmo::{self, LmoSettings};
use ubsr_core::optimizer::{split_dataset, train, BisectionConfig};
use ubsr_core::{estimate_ubsr, DistributionModel, Utility};

fn estimator(c: &mut Criterion) {
    let u = Utility::default();
    let mut group = c.benchmark_group("estimate_ubsr");
    for n in [1_000usize, 10_000, 100_000] {
        let z = DistributionModel::uniform(0.0, 10.0).unwrap().sample(n, 7).unwrap().values;
        let bracket = sample_bracket(&z);
        group.bench_with_input(BenchmarkId::from_parameter(n), &z, |b, z| {
            b.iter(|| estimate_ubsr(black_box(z), &u, 2.0, bracket, None).unwrap())
        });
    }
    group.finish();
}

fn exact(c: &mut Criterion) {
    let u = Utility::default();
    let mut group = c.benchmark_group("ubsr_exact");
    for spec in ["uniform:0,10", "gauss:1,2", "exp:1", "mix:0.5*uniform:0,10|0.5*gauss:3,1"] {
        let d: DistributionModel = spec.parse().unwrap();
        group.bench_function(spec, |b| b.iter(|| black_box(&d).ubsr_exact(&u, 2.0).unwrap()));
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let u = Utility::default();
    let settings = LmoSettings::default();
    let mut group = c.benchmark_group("lmo_solve");
    group.sample_size(20);
    for (m, d) in [(200usize, 3usize), (2_000, 10)] {
        let data = synthetic_regression(m, d, 11);
        group.bench_function(format!("m{m}_d{d}"), |b| {
            b.iter(|| lmo::solve(black_box(&data), &u, 0.5, Some(2.0), &settings).unwrap())
        });
    }
    group.finish();
}

fn trainer(c: &mut Criterion) {
    let data = synthetic_regression(1_000, 4, 3);
    let (train_half, estimate_half) = split_dataset(&data, None).unwrap();
    let cfg = BisectionConfig::new(20, 1.0, Utility::default());
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("m1000_d4_T20", |b| b.iter(|| train(&train_half, &estimate_half, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, estimator, exact, oracle, trainer);
criterion_main!(benches);
