use std::hint::black_box;

use classmix_bench::{cifar_like_design, emnist_like_design};
use classmix_core::design::{build_design, initialize_design, optimize_design};
use classmix_core::rng::seeded_rng;
use criterion::{criterion_group, criterion_main, Criterion};

fn initialize(c: &mut Criterion) {
    let mut group = c.benchmark_group("initialize");
    for (name, spec) in [("k10", cifar_like_design(0)), ("k47", emnist_like_design(0))] {
        group.bench_function(name, |b| b.iter(|| initialize_design(black_box(&spec), &mut seeded_rng(3)).unwrap()));
    }
    group.finish();
}

fn optimize(c: &mut Criterion) {
    let spec = cifar_like_design(2000);
    let start = initialize_design(&spec, &mut seeded_rng(3)).unwrap();
    c.bench_function("optimize/k10_2000", |b| {
        b.iter(|| optimize_design(black_box(&start), &mut seeded_rng(4)).unwrap())
    });
    let spec = emnist_like_design(200);
    c.bench_function("build/k47_200", |b| b.iter(|| build_design(black_box(&spec)).unwrap()));
}

criterion_group!(benches, initialize, optimize);
criterion_main!(benches);
