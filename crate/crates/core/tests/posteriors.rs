use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use robpost::models::translation::TranslationFamily;
use robpost::posterior::{gibbs_average, posterior_finite, posterior_functional_mc, sample_indices, split_seed};
use robpost::{Atom, Dataset, Density, FinitePrior, PosteriorConfig, SampledPrior, TestFamily};

fn gaussian_prior(thetas: &[f64], weights: &[f64]) -> FinitePrior {
    let atoms = thetas
        .iter()
        .map(|t| Atom::new(vec![*t], Density::gaussian(*t, 1.0).unwrap()))
        .collect();
    FinitePrior::new(atoms, weights).unwrap()
}

fn draw(d: &Density, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dataset::new((0..n).map(|_| d.sample(&mut rng)).collect()).unwrap()
}

#[test]
fn two_point_inner_average_is_logistic() {
    let logistic = |z: f64| 1.0 / (1.0 + (-z).exp());
    for (t, lambda, w1, w2) in [(1.5, 0.7, 0.3, 0.7), (-2.0, 1.2, 0.5, 0.5), (10.0, 0.05, 0.9, 0.1)] {
        let got = gibbs_average(&[0.0, t], &[f64::ln(w1), f64::ln(w2)], lambda);
        let want = t * logistic(lambda * t + (w2 / w1).ln());
        assert!((got - want).abs() < 1e-14, "{got} {want}");
    }
}

#[test]
fn central_atom_wins_most_replications() {
    let fam = TranslationFamily::laplace(1.0, Density::gaussian(0.0, 1.0).unwrap(), 1.0).unwrap();
    let thetas: Vec<f64> = (0..10).map(|i| i as f64 - 4.5).collect();
    let prior = fam.discretize(&thetas).unwrap();
    let centre = 4;
    let cfg = PosteriorConfig::new(TestFamily::tv(), 0.1, 0.5, 0.01).unwrap();
    let wins = (0..100)
        .filter(|r| {
            let x = draw(&fam.member(thetas[centre]), 50, split_seed(11, *r));
            posterior_finite(&x, &prior, &cfg).unwrap().argmax() == centre
        })
        .count();
    assert!(wins >= 95, "{wins}/100");
}

#[test]
fn categorical_draw_frequency() {
    let prior = gaussian_prior(&[0.0, 1.0], &[0.8, 0.2]);
    let idx = sample_indices(&prior, 10_000, 5);
    let f = idx.iter().filter(|i| **i == 0).count() as f64 / 1e4;
    assert!((0.784..=0.816).contains(&f), "{f}");
}

#[test]
fn symmetric_pair_favours_truth() {
    let prior = gaussian_prior(&[-0.5, 0.5], &[1.0, 1.0]);
    let cfg = PosteriorConfig::new(TestFamily::hellinger(), 0.05, 0.5, 0.01).unwrap();
    let hits = (0..100)
        .filter(|r| {
            let x = draw(&prior.atoms[1].density, 400, split_seed(12, *r));
            posterior_finite(&x, &prior, &cfg).unwrap().weights()[1] > 0.5
        })
        .count();
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn lifted_prior_matches_enumeration() {
    let prior = gaussian_prior(&[-1.0, -0.2, 0.4, 1.1], &[0.1, 0.4, 0.3, 0.2]);
    let x = draw(&Density::gaussian(0.3, 1.0).unwrap(), 40, 3);
    let cfg = PosteriorConfig::new(TestFamily::hellinger(), 0.05, 0.1, 0.01).unwrap();
    let exact = posterior_finite(&x, &prior, &cfg).unwrap().expect(|a| a.tag[0]);
    let est = posterior_functional_mc(
        &x,
        |a| a.tag[0],
        &SampledPrior::from_finite(&prior),
        &cfg,
        2000,
        2000,
        9,
    )
    .unwrap();
    assert!(
        (est.value - exact).abs() <= 4.0 * est.se,
        "{} {} {}",
        est.value,
        exact,
        est.se
    );
}

fn problem() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, u64, usize)> {
    (2usize..8).prop_flat_map(|m| {
        (
            prop::collection::vec(-2.0..2.0f64, m),
            prop::collection::vec(0.05..1.0f64, m),
            any::<u64>(),
            5usize..60,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn weights_sum_to_one((thetas, w, seed, n) in problem(), beta in 0.01..5.0f64) {
        let prior = gaussian_prior(&thetas, &w);
        let x = draw(&Density::laplace(0.0, 1.0).unwrap(), n, seed);
        for fam in [TestFamily::tv(), TestFamily::hellinger()] {
            let cfg = PosteriorConfig::new(fam, 0.05, beta, 0.01).unwrap();
            let post = posterior_finite(&x, &prior, &cfg).unwrap();
            prop_assert!((post.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn constant_functional_is_exactly_one((thetas, w, seed, n) in problem()) {
        let prior = gaussian_prior(&thetas, &w);
        let x = draw(&Density::gaussian(0.0, 1.0).unwrap(), n, seed);
        let cfg = PosteriorConfig::new(TestFamily::tv(), 0.05, 0.3, 0.01).unwrap();
        let est = posterior_functional_mc(&x, |_| 1.0, &SampledPrior::from_finite(&prior), &cfg, 50, 50, seed).unwrap();
        prop_assert_eq!(est.value, 1.0);
    }

    /// Rescaling all prior weights leaves the posterior unchanged.
    #[test]
    fn prior_scale_invariance((thetas, w, seed, n) in problem(), k in 1e-3..1e3f64) {
        let x = draw(&Density::gaussian(0.0, 1.0).unwrap(), n, seed);
        let cfg = PosteriorConfig::new(TestFamily::hellinger(), 0.05, 0.4, 0.01).unwrap();
        let a = posterior_finite(&x, &gaussian_prior(&thetas, &w), &cfg).unwrap();
        let wk: Vec<f64> = w.iter().map(|v| v * k).collect();
        let b = posterior_finite(&x, &gaussian_prior(&thetas, &wk), &cfg).unwrap();
        for (p, q) in a.weights().iter().zip(b.weights()) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
    }

    /// Gibbs averages do not depend on the common offset of the log-weights.
    #[test]
    fn gibbs_average_offset_free(t in prop::collection::vec(-50.0..50.0f64, 2..10), shift in -700.0..700.0f64, lambda in 0.0..3.0f64) {
        let lw: Vec<f64> = (0..t.len()).map(|i| -(i as f64) * 0.3).collect();
        let moved: Vec<f64> = lw.iter().map(|v| v + shift).collect();
        let a = gibbs_average(&t, &lw, lambda);
        let b = gibbs_average(&t, &moved, lambda);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn kl_at_twice_a_is_bayes((thetas, w, seed, n) in problem()) {
        let atoms: Vec<Atom> = thetas
            .iter()
            .map(|t| Atom::new(vec![*t], Density::floored(*t, 1.0, 2.0, -5.0, 5.0).unwrap()))
            .collect();
        let prior = FinitePrior::new(atoms, &w).unwrap();
        let x = draw(&prior.atoms[0].density, n, seed);
        let a = 2.5;
        let cfg = PosteriorConfig::new(TestFamily::kl(a).unwrap(), 0.1, 2.0 * a, 0.01).unwrap();
        let post = posterior_finite(&x, &prior, &cfg).unwrap();
        let lw: Vec<f64> = prior
            .atoms
            .iter()
            .zip(&prior.log_weights)
            .map(|(at, l)| l + x.iter().map(|p| at.density.ln_pdf(p)).sum::<f64>())
            .collect();
        let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = lw.iter().map(|v| (v - top).exp()).sum();
        for (p, l) in post.weights().iter().zip(&lw) {
            let b = (l - top).exp() / z;
            prop_assert!((p - b).abs() <= 1e-10 * b.max(1e-300), "{} {}", p, b);
        }
    }
}
