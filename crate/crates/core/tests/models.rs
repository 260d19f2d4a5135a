use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robpost::loss::tv_distance;
use robpost::models::lemmas::{bump_constants, holder_shift_scale, tv_scale_shift_bounds};
use robpost::models::locscale::{index_log_norm, index_tail_mass, BaseClass, LocScaleNet, DROPPED_MASS};
use robpost::models::sparse::{gaussian_hellinger_constant, sparsity_radius, SparsePrior};
use robpost::models::translation::TranslationFamily;
use robpost::Density;

fn gauss() -> Density {
    Density::gaussian(0.0, 1.0).unwrap()
}

/// Nonincreasing histogram on `[0, 1]` from arbitrary positive weights.
fn decreasing(mut w: Vec<f64>) -> Density {
    w.sort_by(|a, b| b.total_cmp(a));
    let n = w.len();
    let s: f64 = w.iter().sum();
    let heights = w.iter().map(|v| v * n as f64 / s).collect();
    let edges = (0..=n).map(|i| i as f64 / n as f64).collect();
    Density::histogram(edges, heights).unwrap()
}

#[test]
fn power_law_distance_grid() {
    for alpha in [0.25, 0.5, 0.8, 1.0] {
        let fam = TranslationFamily::power_law(alpha, gauss(), 1.0).unwrap();
        for i in 0..=24 {
            let t = i as f64 / 16.0;
            let tv = tv_distance(&fam.member(0.0), &fam.member(t)).unwrap();
            assert!((tv - t.powf(alpha).min(1.0)).abs() < 1e-6, "alpha {alpha} t {t}: {tv}");
        }
    }
}

#[test]
fn monotone_net_rate_and_step() {
    // D(η) = C/η gives η_n = (24 C / n)^(1/3) exactly once η_n < 1
    let b = 2.0;
    let c = (3.0 * b + 1.0) * 2f64.ln();
    for n in [1000, 8000, 64_000, 1_000_000] {
        let net = LocScaleNet::build(BaseClass::Monotone { b }, n, 1, 4.0).unwrap();
        let want = (24.0 * c / n as f64).cbrt();
        assert!(
            (net.params.eta - want).abs() < 1e-12 * want,
            "n {n}: {} vs {want}",
            net.params.eta
        );
        assert_eq!(net.params.delta, net.params.eta / (2.0 * b));
        let beta = 0.5 * (4.0 * want + 2.0 * (18.6 * 2.0 / n as f64).sqrt());
        assert!((net.params.beta - beta).abs() < 1e-12);
    }
}

#[test]
fn monotone_net_box_and_mass() {
    let net = LocScaleNet::build(BaseClass::Monotone { b: 2.0 }, 1000, 1, 4.0).unwrap();
    assert!(!net.degenerate);
    let cap = net.index_cap as i64;
    for j0 in [-cap, 0, cap] {
        for j in [-cap, 0, cap] {
            assert!(net.in_box(j0, &[j]), "({j0}, {j}) outside the box");
        }
    }
    if net.box_limited {
        assert!(net.captured_mass < 1.0 - DROPPED_MASS);
    } else {
        assert!(net.captured_mass >= 1.0 - DROPPED_MASS);
        assert!(1.0 - (1.0 - index_tail_mass(net.index_cap)).powi(2) < DROPPED_MASS);
    }
    assert!(net.representable_mass <= net.captured_mass);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let idx = net.sample_index(&mut rng);
        assert!(idx.j0.unsigned_abs() <= net.index_cap && idx.j[0].unsigned_abs() <= net.index_cap);
        assert!(net.in_box(idx.j0, &idx.j));
        if idx.j0.unsigned_abs() <= net.scale_cap {
            let a = net.atom(&idx).unwrap();
            let sigma = *a.tag.last().unwrap();
            assert!(sigma.is_finite() && sigma > 0.0);
        } else {
            assert!(net.atom(&idx).is_err());
        }
    }
}

#[test]
fn index_weights_normalize() {
    // per coordinate: Σ_j (1+|j|)^-2 = π²/3 - 1
    let z = index_log_norm().exp();
    for cap in [0u64, 1, 5, 40, 300] {
        let head: f64 = (-(cap as i64)..=cap as i64)
            .map(|j| (1.0 + j.unsigned_abs() as f64).powi(-2))
            .sum();
        assert!((head / z + index_tail_mass(cap) - 1.0).abs() < 1e-13, "cap {cap}");
    }
    let net = LocScaleNet::build(BaseClass::Monotone { b: 2.0 }, 1000, 1, 4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut idx = net.sample_index(&mut rng);
    idx.j0 = 0;
    idx.j = vec![0];
    let want = -(2.0 * index_log_norm() + net.log_cardinality);
    assert!((net.log_weight(&idx) - want).abs() < 1e-12);
}

#[test]
fn sparse_cube_example_by_simulation() {
    let prior = SparsePrior::new(2, 1.0).unwrap();
    let exact = prior.subset_ball_mass(&[0.0, 0.0], &[true, true], 0.5).unwrap();
    assert_eq!(exact, 0.25);
    let mut rng = ChaCha8Rng::seed_from_u64(496);
    let draws = 1_000_000;
    let hits = (0..draws)
        .filter(|_| {
            let a: f64 = rng.random_range(-1.0..=1.0);
            let b: f64 = rng.random_range(-1.0..=1.0);
            a.abs() <= 0.5 && b.abs() <= 0.5
        })
        .count();
    let p = hits as f64 / draws as f64;
    let se = (exact * (1.0 - exact) / draws as f64).sqrt();
    assert!((p - exact).abs() < 3.0 * se, "{p}");
}

#[test]
fn sparse_empty_support_and_gaussian_precondition() {
    assert_eq!(sparsity_radius(10, 1.0, 1.0, 1.0, 50, 3.0, 0, 0.0).unwrap(), 3.0 / 50.0);
    for k in [2, 8, 50] {
        let sigma = 0.7;
        let bk = gaussian_hellinger_constant(k, sigma);
        let edge = 2.0 * sigma * (2.0 / k as f64).sqrt();
        assert!(sparsity_radius(k, edge * 1.001, bk, 1.0, 100, 1.0, 1, 0.0).is_ok());
        assert!(sparsity_radius(k, edge * 0.999, bk, 1.0, 100, 1.0, 1, 0.0).is_err());
    }
}

fn support_point() -> impl Strategy<Value = (Vec<bool>, Vec<f64>)> {
    (1usize..8).prop_flat_map(|k| {
        (
            prop::collection::vec(any::<bool>(), k),
            prop::collection::vec(-2.0..2.0f64, k),
        )
            .prop_map(|(mask, v)| {
                let theta = v.iter().zip(&mask).map(|(x, m)| if *m { *x } else { 0.0 }).collect();
                (mask, theta)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn translation_tv_is_a_function_of_the_gap(t1 in -3.0..3.0f64, t2 in -3.0..3.0f64, b in 0.2..2.0f64, alpha in 0.2..1.0f64) {
        let lap = TranslationFamily::laplace(b, gauss(), 1.0).unwrap();
        let tv = tv_distance(&lap.member(t1), &lap.member(t2)).unwrap();
        prop_assert!((tv - lap.h(t1 - t2)).abs() < 1e-6);
        let pl = TranslationFamily::power_law(alpha, gauss(), 1.0).unwrap();
        let tv = tv_distance(&pl.member(t1), &pl.member(t2)).unwrap();
        prop_assert!((tv - pl.h(t1 - t2)).abs() < 1e-6);
    }

    #[test]
    fn g_inverts_h(t in 0.0..4.0f64, b in 0.2..2.0f64, alpha in 0.2..1.0f64) {
        let lap = TranslationFamily::laplace(b, gauss(), 1.0).unwrap();
        prop_assert!((lap.g(lap.h(t)) - t).abs() < 1e-9 * t.max(1.0));
        let pl = TranslationFamily::power_law(alpha, gauss(), 1.0).unwrap();
        let t = t / 4.0;
        prop_assert!((pl.g(pl.h(t)) - t).abs() < 1e-9);
    }

    #[test]
    fn monotone_shift_scale_bounds(w in prop::collection::vec(0.01..1.0f64, 1..10), m in -1.0..1.0f64, sigma in 1.0..4.0f64) {
        let p = decreasing(w);
        let b = p.pdf1(0.0).max(1.0);
        let c = tv_scale_shift_bounds(&p, b, m, sigma).unwrap();
        prop_assert!(c.slack() >= -1e-6, "{:?}", c);
    }

    #[test]
    fn holder_bound_holds_for_bumps(centre in 0.2..0.8f64, frac in 0.1..1.0f64, alpha in 0.2..1.0f64, m in -0.5..0.5f64, sigma in 1.0..3.0f64) {
        let hw = frac * centre.min(1.0 - centre);
        let p = Density::bump(centre, hw, alpha).unwrap();
        let (l0, l1) = bump_constants(hw, alpha);
        let (bound, measured) = holder_shift_scale(&p, l0.max(1.0), l1, alpha, m, sigma).unwrap();
        prop_assert!(measured <= bound + 1e-6, "{} > {}", measured, bound);
    }

    #[test]
    fn projection_lands_within_eta(w in prop::collection::vec(0.05..1.0f64, 1..12), n in 200usize..5000) {
        let p = decreasing(w);
        let b = p.pdf1(0.0);
        prop_assume!(b > 1.0);
        let net = LocScaleNet::build(BaseClass::Monotone { b }, n, 1, 4.0).unwrap();
        let q = net.grid.element(&net.grid.project(&p)).unwrap();
        prop_assert!(tv_distance(&p, &q).unwrap() <= net.params.eta + 1e-9);
    }

    #[test]
    fn sparse_product_matches_enumeration((_, theta) in support_point(), r in 0.01..3.0f64) {
        let prior = SparsePrior::new(theta.len(), 2.0).unwrap();
        let a = prior.ball_mass(&theta, r).unwrap();
        let b = prior.ball_mass_enumerated(&theta, r).unwrap();
        prop_assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn sparse_ratio_bound((mask, theta) in support_point(), r in 0.01..1.0f64, big_k in 1.0..8.0f64) {
        let prior = SparsePrior::new(theta.len(), 2.0).unwrap();
        let small = prior.subset_ball_mass(&theta, &mask, r).unwrap();
        let large = prior.subset_ball_mass(&theta, &mask, big_k * r).unwrap();
        let size = mask.iter().filter(|v| **v).count() as i32;
        prop_assert!(small > 0.0);
        prop_assert!(large <= big_k.powi(size) * small * (1.0 + 1e-12));
    }
}
