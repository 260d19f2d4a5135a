use proptest::prelude::*;

use robpost::geometry::{
    concentration_radius, exact_radius, favored_set_member, log_ratio_v, select_beta_alpha, translation_radius_bound,
    BetaGrid, DistanceProfile, PriorGeometry, RadiusQuery, TranslationBound, GRID_RATIO,
};
use robpost::models::translation::TranslationFamily;
use robpost::Density;

#[test]
fn three_atom_log_ratio() {
    let p = DistanceProfile::exact(&[0.1, 0.5, 1.5], &[0.2, 0.3, 0.5]).unwrap();
    assert!((log_ratio_v(&p, 0.3) - 2.5f64.ln()).abs() < 1e-15);
}

/// Scan of the doubling condition on a geometric grid, written out directly.
fn scan(weights: &[f64], dists: &[f64], rate: f64, floor: f64, ratio: f64) -> f64 {
    let total: f64 = weights.iter().sum();
    let mass = |r: f64| {
        dists
            .iter()
            .zip(weights)
            .filter(|(d, _)| **d <= r)
            .map(|(_, w)| w)
            .sum::<f64>()
            / total
    };
    let top = 2.0 * dists.iter().copied().fold(floor, f64::max);
    let mut r = floor;
    let mut answer = floor;
    while r <= top {
        let lo = mass(r);
        if lo <= 0.0 || mass(2.0 * r) > (rate * r).exp() * lo {
            answer = r * ratio;
        }
        r *= ratio;
    }
    answer
}

#[test]
fn five_atom_radius_matches_fine_scan() {
    let d = [0.0, 0.03, 0.2, 0.45, 0.9];
    let w = [0.1, 0.15, 0.3, 0.25, 0.2];
    let p = DistanceProfile::exact(&d, &w).unwrap();
    for (beta, n) in [(0.3, 50), (0.5, 200), (1.0, 1000)] {
        let q = RadiusQuery::new(beta, 0.01, n, 0.5).unwrap();
        let coarse = concentration_radius(&q, &p).radius.unwrap();
        let fine = scan(&w, &d, q.rate(), q.floor(), GRID_RATIO.powf(0.1));
        assert!((coarse - fine).abs() <= coarse * (GRID_RATIO - 1.0), "{coarse} {fine}");
    }
}

#[test]
fn isolated_atom_is_excluded() {
    // centred on the light atom, the heavy one sits far away: the 2r ball jumps
    let far = DistanceProfile::exact(&[0.0, 0.6], &[0.01, 0.99]).unwrap();
    let near = DistanceProfile::exact(&[0.0, 0.6], &[0.99, 0.01]).unwrap();
    let n = 100;
    let beta = 0.1;
    assert!(!favored_set_member(&far, beta, 0.01, n, 0.5).unwrap());
    assert!(favored_set_member(&near, beta, 0.01, n, 0.5).unwrap());
}

#[test]
fn laplace_beta_alpha_respects_closed_form() {
    let fam = TranslationFamily::laplace(1.0, Density::gaussian(0.0, 1.0).unwrap(), 1.0).unwrap();
    let thetas: Vec<f64> = (0..161).map(|i| -4.0 + 0.05 * i as f64).collect();
    let prior = fam.discretize(&thetas).unwrap();
    let geom = PriorGeometry::from_matrix(&prior, &fam.distance_matrix(&thetas)).unwrap();
    let t = fam.q_quantile(1.0 - 0.025);
    for n in [100, 1000, 10_000] {
        let bbar = translation_radius_bound(&fam, t, n, 0.01, 0.0, 0.5, TranslationBound::BetaBar).unwrap();
        let b = select_beta_alpha(&geom, 0.05, n, 0.5, 0.01, &BetaGrid::default())
            .unwrap()
            .unwrap();
        assert!(b <= bbar * GRID_RATIO, "n = {n}: {b} vs {bbar}");
        let members = geom.members(bbar, 0.01, n, 0.5).unwrap();
        for (th, m) in thetas.iter().zip(&members) {
            assert!(th.abs() > t || *m, "theta {th} left out at n = {n}");
        }
    }
}

fn profile() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..12).prop_flat_map(|m| {
        (
            prop::collection::vec(0.0..1.0f64, m),
            prop::collection::vec(0.01..1.0f64, m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ball_mass_is_monotone_and_saturates((d, w) in profile(), r1 in 0.0..1.2f64, r2 in 0.0..1.2f64) {
        let p = DistanceProfile::exact(&d, &w).unwrap();
        let (a, b) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(p.value(a) <= p.value(b));
        prop_assert!((0.0..=1.0).contains(&p.value(a)));
        let top = d.iter().copied().fold(0.0, f64::max);
        prop_assert!((p.value(top) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn radius_never_below_floor((mut d, w) in profile(), beta in 0.05..3.0f64, n in 10usize..2000) {
        d[0] = 0.0;
        let p = DistanceProfile::exact(&d, &w).unwrap();
        let q = RadiusQuery::new(beta, 0.01, n, 0.5).unwrap();
        if let Some(r) = concentration_radius(&q, &p).radius {
            prop_assert!(r >= q.floor());
        }
        prop_assert!(exact_radius(&p, q.rate(), q.floor()).unwrap() >= q.floor());
    }

    #[test]
    fn grid_radius_brackets_exact((mut d, w) in profile(), beta in 0.05..3.0f64, n in 10usize..2000) {
        d[0] = 0.0;
        let p = DistanceProfile::exact(&d, &w).unwrap();
        let q = RadiusQuery::new(beta, 0.01, n, 0.5).unwrap().with_grid(0.0, 4.0, GRID_RATIO).unwrap_or_else(|_| RadiusQuery::new(beta, 0.01, n, 0.5).unwrap());
        let exact = exact_radius(&p, q.rate(), q.floor()).unwrap();
        if let Some(r) = concentration_radius(&q, &p).radius {
            prop_assert!(r >= exact * (1.0 - 1e-12), "{} < {}", r, exact);
            prop_assert!(r <= exact * GRID_RATIO * (1.0 + 1e-12), "{} > {}", r, exact);
        }
    }

    #[test]
    fn favored_set_grows_with_beta((mut d, w) in profile(), n in 16usize..2000, k in 0usize..40, gap in 1usize..20) {
        d[0] = 0.0;
        let p = DistanceProfile::exact(&d, &w).unwrap();
        let grid = BetaGrid::default().values(n);
        let (b1, b2) = (grid[k], grid[k + gap]);
        if favored_set_member(&p, b1, 0.01, n, 0.5).unwrap() {
            prop_assert!(favored_set_member(&p, b2, 0.01, n, 0.5).unwrap());
        }
    }

    /// If the doubling condition holds at every `r' ≥ r`, the scan returns at most `r` times one step.
    #[test]
    fn sufficient_mass_condition((mut d, w) in profile(), beta in 0.05..3.0f64, n in 10usize..2000, r in 0.01..1.0f64) {
        d[0] = 0.0;
        let p = DistanceProfile::exact(&d, &w).unwrap();
        let q = RadiusQuery::new(beta, 0.01, n, 0.5).unwrap();
        let rate = q.rate();
        let mut pts: Vec<f64> = vec![r];
        for x in &d {
            for y in [*x, 0.5 * x] {
                if y >= r {
                    pts.push(y);
                }
            }
        }
        let holds = pts.iter().all(|s| {
            let lo = p.value(*s);
            lo > 0.0 && p.value(2.0 * s) <= (rate * s).exp() * lo
        });
        if holds && r >= q.floor() {
            let got = concentration_radius(&q, &p).radius.unwrap();
            prop_assert!(got <= r * GRID_RATIO * (1.0 + 1e-12), "{} vs {}", got, r);
        }
    }
}
