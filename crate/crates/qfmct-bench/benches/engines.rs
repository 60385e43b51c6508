//! Benchmarks of the pieces that dominate simulation time: statistic
//! evaluation, the three replicate engines and quantile calibration.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};

use qfmct::hypotheses::per_component_equality;
use qfmct::quadform::q_vector;
use qfmct::resampling::{
    monte_carlo_replicates, parametric_bootstrap_replicates, wild_bootstrap_replicates,
    WeightDist,
};
use qfmct::testing::calibrate_quantiles;
use qfmct::{compute_stats, Dataset, Mat, QfKind};

/// Three groups of 5-dimensional data, sizes 40/40/20.
fn design_dataset() -> Dataset {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let groups = [40, 40, 20]
        .iter()
        .map(|&n| Mat::from_fn(n, 5, |_, _| rng.random_range(-2.0..2.0)))
        .collect();
    Dataset::new(groups).unwrap()
}

fn bench_statistic(c: &mut Criterion) {
    let data = design_dataset();
    let stats = compute_stats(&data);
    let part = per_component_equality(3, 5).unwrap();
    c.bench_function("q_vector ats 3x5", |b| {
        b.iter(|| q_vector(black_box(&part), black_box(&stats), QfKind::AtsIdentity).unwrap())
    });
    c.bench_function("q_vector wts 3x5", |b| {
        b.iter(|| q_vector(black_box(&part), black_box(&stats), QfKind::Wts).unwrap())
    });
}

fn bench_engines(c: &mut Criterion) {
    let data = design_dataset();
    let stats = compute_stats(&data);
    let part = per_component_equality(3, 5).unwrap();

    c.bench_function("monte carlo B=1000", |b| {
        b.iter(|| {
            monte_carlo_replicates(&stats, &part, QfKind::AtsIdentity, 1000, black_box(7)).unwrap()
        })
    });
    c.bench_function("parametric bootstrap B=1000", |b| {
        b.iter(|| {
            parametric_bootstrap_replicates(&data, &part, QfKind::AtsIdentity, 1000, black_box(7))
                .unwrap()
        })
    });
    c.bench_function("wild bootstrap B=1000", |b| {
        b.iter(|| {
            wild_bootstrap_replicates(
                &data,
                &part,
                QfKind::AtsIdentity,
                1000,
                black_box(7),
                WeightDist::Mammen,
            )
            .unwrap()
        })
    });
}

fn bench_calibration(c: &mut Criterion) {
    let data = design_dataset();
    let stats = compute_stats(&data);
    let part = per_component_equality(3, 5).unwrap();
    let reps = monte_carlo_replicates(&stats, &part, QfKind::AtsIdentity, 10_000, 3).unwrap();
    c.bench_function("calibrate quantiles B=10000 L=5", |b| {
        b.iter(|| calibrate_quantiles(black_box(&reps), 0.05).unwrap())
    });
}

criterion_group!(benches, bench_statistic, bench_engines, bench_calibration);
criterion_main!(benches);
