mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use robpost::family::{empirical_range, verify_assumption_moments};
use robpost::posterior::pairwise_t;
use robpost::{Dataset, Density, TestFamily};

fn u(a: f64, b: f64) -> Density {
    Density::uniform(a, b).unwrap()
}

#[test]
fn tv_uniform_translate_values() {
    let f = TestFamily::tv();
    let (p, q) = (u(0.0, 1.0), u(0.5, 1.5));
    assert_eq!(f.stat(&p, &q, &[0.25]).unwrap(), -0.5);
    assert_eq!(f.stat(&p, &q, &[1.25]).unwrap(), 0.5);
    let x = Dataset::from_1d(vec![0.1, 0.2, 1.1, 1.2]).unwrap();
    assert_eq!(pairwise_t(&x, &p, &q, &f).unwrap(), 0.0);
}

#[test]
fn hellinger_ratio_four() {
    let f = TestFamily::hellinger();
    let p = u(0.0, 1.0);
    let q = Density::histogram(vec![0.0, 0.5, 1.0], vec![1.6, 0.4]).unwrap();
    // q/p = 1.6 on the left half; at a point with q/p = 4 the statistic is 1/6
    let t = f.stat_from_logs(0.0, 4f64.ln(), &Default::default()).unwrap();
    assert!((t - 1.0 / 6.0).abs() < 1e-15);
    assert!(f.stat(&p, &q, &[0.2]).unwrap() > 0.0);
}

#[test]
fn moment_suites_on_named_examples() {
    let tv = TestFamily::tv();
    let pool: Vec<Density> = [0.0, 0.2, 0.5, 0.9].iter().map(|a| u(*a, a + 1.0)).collect();
    let pairs: Vec<_> = pool
        .iter()
        .flat_map(|p| pool.iter().map(move |q| (p.clone(), q.clone())))
        .collect();
    let rep = verify_assumption_moments(&tv, &pool, &pairs, 10_000, 1e-6);
    assert_eq!(rep.violations, 0);
    assert!(rep.checks.iter().all(|c| c.moment_slack >= -1e-6));

    let gs: Vec<Density> = [(-1.0, 1.0), (0.0, 0.5), (0.7, 1.8), (1.5, 1.0)]
        .iter()
        .map(|(m, s)| Density::gaussian(*m, *s).unwrap())
        .collect();
    let pairs: Vec<_> = gs
        .iter()
        .flat_map(|p| gs.iter().map(move |q| (p.clone(), q.clone())))
        .collect();
    let rep = verify_assumption_moments(&TestFamily::hellinger(), &gs, &pairs, 10_000, 1e-6);
    assert_eq!(rep.violations, 0);
    assert!(rep.checks.iter().all(|c| c.variance_slack.unwrap() >= -1e-6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn statistics_are_antisymmetric(p in common::density(), q in common::density(), x in -6.0..6.0f64) {
        for f in [TestFamily::tv(), TestFamily::hellinger()] {
            let a = f.stat(&p, &q, &[x]).unwrap();
            let b = f.stat(&q, &p, &[x]).unwrap();
            prop_assert!((a + b).abs() <= 1e-12);
        }
    }

    #[test]
    fn kl_statistic_is_antisymmetric(p in common::floored(), q in common::floored(), x in -6.0..6.0f64) {
        let f = TestFamily::kl(common::floored_ratio_bound(&p, &q)).unwrap();
        let a = f.stat(&p, &q, &[x]).unwrap();
        let b = f.stat(&q, &p, &[x]).unwrap();
        prop_assert!((a + b).abs() <= 1e-12);
    }

    #[test]
    fn tv_takes_few_values(p in common::density(), q in common::density(), seed in any::<u64>()) {
        use rand::SeedableRng;
        let f = TestFamily::tv();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut seen = BTreeSet::new();
        for _ in 0..500 {
            let x = if seen.len() % 2 == 0 { p.sample(&mut rng) } else { q.sample(&mut rng) };
            let t = f.stat(&p, &q, &x).unwrap();
            prop_assert!(t.abs() <= 1.0);
            seen.insert(t.to_bits());
        }
        prop_assert!(seen.len() <= 4);
    }

    /// With `Q(q > p) = P(p > q)` the values are centred and `|t| ≤ 1/2`.
    /// Dyadic endpoints keep both heights bitwise equal.
    #[test]
    fn tv_centred_for_equal_width_translates(a in -128i32..128, w in 8i32..192, d in -192i32..192, x in -6.0..6.0f64) {
        let f = TestFamily::tv();
        let s = 1.0 / 64.0;
        let (a, w, d) = (a as f64 * s, w as f64 * s, d as f64 * s);
        let (p, q) = (u(a, a + w), u(a + d, a + d + w));
        prop_assert!(f.stat(&p, &q, &[x]).unwrap().abs() <= 0.5 + 1e-12);
    }

    #[test]
    fn ranges_at_most_one(p in common::density(), q in common::density(), seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..2000).map(|i| if i % 2 == 0 { p.sample(&mut rng) } else { q.sample(&mut rng) }).collect();
        for f in [TestFamily::tv(), TestFamily::hellinger()] {
            prop_assert!(empirical_range(&f, &p, &q, &xs).unwrap() <= 1.0 + 1e-12);
        }
        let h = TestFamily::hellinger();
        for x in &xs[..200] {
            prop_assert!(h.stat(&p, &q, x).unwrap().abs() <= 0.5);
        }
    }

    #[test]
    fn hellinger_variance_bound(s in common::gaussian(), p in common::gaussian(), q in common::gaussian()) {
        let rep = verify_assumption_moments(&TestFamily::hellinger(), &[s], &[(p, q)], 10_000, 1e-6);
        prop_assert_eq!(rep.violations, 0);
    }

    #[test]
    fn kl_moment_bounds(s in common::floored(), p in common::floored(), q in common::floored()) {
        let a = common::floored_ratio_bound(&p, &q)
            .max(common::floored_ratio_bound(&s, &p))
            .max(common::floored_ratio_bound(&s, &q));
        let rep = verify_assumption_moments(&TestFamily::kl(a).unwrap(), &[s], &[(p, q)], 10_000, 1e-6);
        prop_assert_eq!(rep.violations, 0, "{:?}", rep.checks);
    }
}
