use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use robpost::experiment::{prepare_model, replication_data, ExperimentConfig, ModelPrior};
use robpost::geometry::{concentration_radius, DistanceProfile, RadiusQuery};
use robpost::loss::tv_distance;
use robpost::models::sparse::SparsePrior;
use robpost::posterior::{posterior_fit, posterior_mc, t_matrix};
use robpost::{Dataset, Density, FinitePrior, PosteriorConfig, TestFamily};

fn laplace_setup(atoms: usize, n: usize) -> (Dataset, FinitePrior) {
    let cfg = ExperimentConfig::from_text(&format!(
        "model = translation(laplace(0, 1), gaussian, 1)\ngrid = uniform(-3, 3, {atoms})\ntruth = 0.2\nn = {n}\nseed = 1"
    ))
    .unwrap();
    let model = prepare_model(&cfg).unwrap();
    let data = replication_data(&cfg, &model, 0).unwrap();
    let ModelPrior::Finite(prior) = model.prior else {
        unreachable!()
    };
    (data.x, prior)
}

fn bench_t_matrix(c: &mut Criterion) {
    let (x, prior) = laplace_setup(101, 500);
    let atoms: Vec<&Density> = prior.atoms.iter().map(|a| &a.density).collect();
    let family = TestFamily::hellinger();
    c.bench_function("t_matrix 101x101 n=500", |b| {
        b.iter(|| t_matrix(black_box(&x), &atoms, &family).unwrap())
    });
}

fn bench_posterior_fit(c: &mut Criterion) {
    let (x, prior) = laplace_setup(101, 500);
    let cfg = PosteriorConfig::new(TestFamily::tv(), 0.1, 0.5, 0.01).unwrap();
    c.bench_function("posterior_fit 101 atoms n=500", |b| {
        b.iter(|| posterior_fit(black_box(&x), &prior, &cfg).unwrap())
    });
}

fn bench_tv_distance(c: &mut Criterion) {
    let p = Density::gaussian(0.0, 1.0).unwrap();
    let q = Density::laplace(0.7, 0.5).unwrap();
    c.bench_function("tv_distance gaussian-laplace", |b| {
        b.iter(|| tv_distance(black_box(&p), black_box(&q)).unwrap())
    });
}

fn bench_radius(c: &mut Criterion) {
    let m = 2000;
    let d: Vec<f64> = (0..m).map(|i| (i as f64 / m as f64).powi(2)).collect();
    let w: Vec<f64> = (0..m).map(|i| 1.0 / (1.0 + i as f64)).collect();
    let profile = DistanceProfile::exact(&d, &w).unwrap();
    let q = RadiusQuery::new(0.5, 0.01, 1000, 0.5).unwrap();
    c.bench_function("concentration_radius 2000 atoms", |b| {
        b.iter(|| concentration_radius(black_box(&q), &profile))
    });
}

fn bench_posterior_mc(c: &mut Criterion) {
    let prior = SparsePrior::new(5, 1.0).unwrap().gaussian_prior(1.0).unwrap();
    let pts: Vec<Vec<f64>> = (0..100)
        .map(|i| (0..5).map(|j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5).collect())
        .collect();
    let x = Dataset::new(pts).unwrap();
    let cfg = PosteriorConfig::new(TestFamily::hellinger(), 0.008, 0.5, 0.001).unwrap();
    let mut group = c.benchmark_group("posterior_mc");
    group.sample_size(10);
    group.bench_function("k=5 n=100 N=N'=200", |b| {
        b.iter(|| posterior_mc(black_box(&x), &prior, &cfg, 200, 200, 7).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_t_matrix,
    bench_posterior_fit,
    bench_tv_distance,
    bench_radius,
    bench_posterior_mc
);
criterion_main!(benches);
