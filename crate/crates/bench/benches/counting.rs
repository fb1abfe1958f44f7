//! Hot-path benchmarks: leaf refinement, minimal-cell counting, greedy ball
//! covers, and the product-measure mass spectrum.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use unstable_entropy::rng::{stream, Purpose};
use unstable_entropy::{
    ball_cover_greedy, bernoulli_mass_spectrum, partition_count, partition_count_spectrum,
    refine_on_leaf, sample_conditional,
};
use unstable_entropy_bench::cat_fixture;

const BUDGET: u64 = 1 << 22;

fn bench_refine(c: &mut Criterion) {
    let (system, scheme, cond) = cat_fixture(1);
    let mut group = c.benchmark_group("refine_on_leaf");
    for n in [8usize, 11] {
        group.bench_function(format!("cat_n{n}"), |b| {
            b.iter(|| refine_on_leaf(&system, &scheme, black_box(cond.cell()), n, BUDGET).unwrap())
        });
    }
    group.finish();
}

fn bench_partition_count(c: &mut Criterion) {
    let (system, scheme, cond) = cat_fixture(1);
    let cells = refine_on_leaf(&system, &scheme, cond.cell(), 10, BUDGET).unwrap();
    c.bench_function("partition_count/cat_n10_d0.1", |b| {
        b.iter(|| partition_count(&cond, black_box(&cells), 0.1).unwrap())
    });
}

fn bench_greedy_cover(c: &mut Criterion) {
    let (_, _, cond) = cat_fixture(1);
    let mut rng = stream(1, Purpose::CandidateSamples, 0);
    let samples = sample_conditional(&cond, 10_000, 0, &mut rng).unwrap();
    c.bench_function("ball_cover_greedy/cat_n8_eps0.1_10k", |b| {
        b.iter(|| ball_cover_greedy(&cond, black_box(&samples), 8, 0.1, 0.1).unwrap())
    });
}

fn bench_spectrum(c: &mut Criterion) {
    c.bench_function("mass_spectrum_count/coin_n24_d0.25", |b| {
        b.iter(|| {
            let groups = bernoulli_mass_spectrum(black_box(&[0.5, 0.5]), 24).unwrap();
            partition_count_spectrum(&groups, 0.25).unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_refine,
    bench_partition_count,
    bench_greedy_cover,
    bench_spectrum
);
criterion_main!(benches);
