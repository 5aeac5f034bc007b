// SPDX-License-Identifier: Apache-2.0

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use curriculum_bench::{checkpoint_set, corpus, gradients, phi, tied_pairs};
use curriculum_core::analysis::{kendall_tau_b, kendall_tau_b_oracle};
use curriculum_core::curricula::{build, CurriculumInputs, Strategy, StrategySpec};
use curriculum_core::heuristics::score_corpus;
use curriculum_core::influence::{
    convolve, influence_column, influence_matrix, make_lognorm_filter, normalize_rows, pairwise_oracle,
    InfluenceConfig,
};

fn influence(c: &mut Criterion) {
    let mut g = c.benchmark_group("influence_column");
    for n in [200, 1000] {
        let grads = normalize_rows(&gradients(0, n, 64, 1));
        g.bench_with_input(BenchmarkId::new("mean_path", n), &grads, |b, x| {
            b.iter(|| influence_column(black_box(x), true).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("pairwise", n), &grads, |b, x| {
            b.iter(|| pairwise_oracle(black_box(x), true).unwrap())
        });
    }
    g.finish();

    let set = checkpoint_set(10, 20_000, 64, 2);
    c.bench_function("influence_matrix 20000x10 d64", |b| {
        b.iter(|| influence_matrix(black_box(&set), InfluenceConfig::default()).unwrap())
    });
    let p = phi(10, 20_000, 3);
    let h = make_lognorm_filter(10, 0.0, 1.0).unwrap();
    c.bench_function("convolve 20000x10", |b| b.iter(|| convolve(black_box(&p), &h).unwrap()));
}

fn tau(c: &mut Criterion) {
    let mut g = c.benchmark_group("kendall_tau_b");
    for n in [200, 2000] {
        let (x, y) = tied_pairs(n, 50, 4);
        g.bench_with_input(BenchmarkId::new("merge_sort", n), &(x.clone(), y.clone()), |b, (x, y)| {
            b.iter(|| kendall_tau_b(black_box(x), black_box(y)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("pairwise", n), &(x, y), |b, (x, y)| {
            b.iter(|| kendall_tau_b_oracle(black_box(x), black_box(y)).unwrap())
        });
    }
    g.finish();
}

fn builders(c: &mut Criterion) {
    let docs = corpus(10_000, 5);
    let p = phi(10, 10_000, 6);
    let scores = score_corpus(&docs, 5, 1.0).unwrap();
    let inputs = CurriculumInputs {
        phi: Some(&p),
        scores: Some(&scores),
    };
    let spec = StrategySpec::default();
    let mut g = c.benchmark_group("build");
    g.sample_size(10);
    for s in Strategy::ALL {
        g.bench_function(s.name(), |b| b.iter(|| build(s, &docs, inputs, &spec, 1, u64::MAX).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, influence, tau, builders);
criterion_main!(benches);
