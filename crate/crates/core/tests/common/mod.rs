#![allow(dead_code)]

use proptest::prelude::*;
use robpost::Density;

/// Uniform, Gaussian, Laplace or Cauchy with moderate location and scale.
pub fn density() -> impl Strategy<Value = Density> {
    (0usize..4, -2.0..2.0f64, 0.3..2.5f64).prop_map(|(kind, m, s)| match kind {
        0 => Density::uniform(m, m + s).unwrap(),
        1 => Density::gaussian(m, s).unwrap(),
        2 => Density::laplace(m, s).unwrap(),
        _ => Density::cauchy(m, s).unwrap(),
    })
}

pub fn gaussian() -> impl Strategy<Value = Density> {
    (-2.0..2.0f64, 0.3..2.5f64).prop_map(|(m, s)| Density::gaussian(m, s).unwrap())
}

/// Floored Gaussians sharing the window `[-6, 6]` and depth 3.
pub fn floored() -> impl Strategy<Value = Density> {
    (-2.0..2.0f64, 0.7..1.5f64).prop_map(|(m, s)| Density::floored(m, s, 3.0, -6.0, 6.0).unwrap())
}

/// Sup of `|log p - log q|` for two floored Gaussians from [`floored`].
pub fn floored_ratio_bound(p: &Density, q: &Density) -> f64 {
    let ln = |d: &Density| match d {
        Density::Floored { log_norm, .. } => *log_norm,
        _ => unreachable!(),
    };
    3.0 + (ln(p) - ln(q)).abs()
}
