//! Exhaustive searches at depth 3. Build once with the default features and
//! once with `--no-default-features` to compare the parallel and sequential
//! backends; benchmark ids carry the backend name.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use haarperm::harness::checks::necessity_check;
use haarperm::harness::{gen_permutation, Family, GeneratorKind, GeneratorSpec};
use haarperm::par::PARALLEL;
use haarperm::{distortion, semyonov_k, Budgets, CarlesonExponent, SearchMode};

fn backend() -> &'static str {
    if PARALLEL {
        "parallel"
    } else {
        "sequential"
    }
}

fn searches(c: &mut Criterion) {
    let budgets = Budgets::default();
    let pi = gen_permutation(GeneratorSpec::new(GeneratorKind::RandomBijection, 3, 1)).unwrap();
    let mut group = c.benchmark_group("depth3");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("semyonov_exact", backend()), |b| {
        b.iter(|| semyonov_k(&pi, SearchMode::Exact, &budgets).unwrap())
    });
    group.bench_function(BenchmarkId::new("semyonov_antichain", backend()), |b| {
        b.iter(|| semyonov_k(&pi, SearchMode::Antichain, &budgets).unwrap())
    });
    for a in [1, 2] {
        let alpha = CarlesonExponent::integer(a).unwrap();
        group.bench_function(BenchmarkId::new(format!("distortion_alpha{a}"), backend()), |b| {
            b.iter(|| distortion(&pi, &alpha, SearchMode::Exact, &budgets).unwrap())
        });
    }
    let alpha = CarlesonExponent::from_alpha(num_rational::Rational64::new(3, 2)).unwrap();
    group.bench_function(BenchmarkId::new("distortion_alpha1.5", backend()), |b| {
        b.iter(|| distortion(&pi, &alpha, SearchMode::Exact, &budgets).unwrap())
    });
    group.bench_function(BenchmarkId::new("necessity_sweep", backend()), |b| {
        b.iter(|| necessity_check(&pi, &CarlesonExponent::BMO, Family::Exhaustive, &budgets).unwrap())
    });
    group.finish();
}

criterion_group!(benches, searches);
criterion_main!(benches);
