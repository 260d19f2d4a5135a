//! Sparse prior on `ℝ^k`: a support `m ⊂ {1..k}` is drawn with weight
//! `exp(-L_m)`, `L_m = |m| log k + k log(1 + 1/k)`, then the coordinates in
//! `m` are uniform on `[-R, R]` and the others are zero.
//!
//! The weights factor over coordinates (each one enters the support
//! independently with probability `1/(k+1)`), which turns sums over all
//! `2^k` supports into products of `k` factors.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{arg, Result};
use crate::posterior::{Atom, SampledPrior};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsePrior {
    pub k: usize,
    /// Half-width of the cube.
    pub r: f64,
}

impl SparsePrior {
    pub fn new(k: usize, r: f64) -> Result<Self> {
        if k == 0 || !(r > 0.0 && r.is_finite()) {
            return arg("sparse prior needs k >= 1 and R > 0");
        }
        Ok(Self { k, r })
    }

    /// `L_m` for a support of size `size`.
    pub fn log_penalty(&self, size: usize) -> f64 {
        let k = self.k as f64;
        size as f64 * k.ln() + k * (1.0 / k).ln_1p()
    }

    /// `Σ_m exp(-L_m)` by summing `C(k, s) exp(-L_s)` over sizes.
    pub fn total_weight(&self) -> f64 {
        let mut binom = 1.0f64;
        let mut sum = 0.0;
        for s in 0..=self.k {
            sum += binom * (-self.log_penalty(s)).exp();
            binom = binom * (self.k - s) as f64 / (s + 1) as f64;
        }
        sum
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.k {
            return arg(format!("theta must have {} coordinates", self.k));
        }
        if theta.iter().any(|t| !(t.abs() <= self.r)) {
            return arg("theta lies outside the cube");
        }
        Ok(())
    }

    /// `ν_m(|θ' - θ|_∞ ≤ r)` for the support given by `mask`.
    pub fn subset_ball_mass(&self, theta: &[f64], mask: &[bool], radius: f64) -> Result<f64> {
        self.check(theta)?;
        if mask.len() != self.k || !(radius > 0.0) {
            return arg("mask length must be k and the radius positive");
        }
        let mut v = 1.0;
        for (t, inside) in theta.iter().zip(mask) {
            v *= if *inside {
                self.coord_mass(*t, radius)
            } else if t.abs() <= radius {
                1.0
            } else {
                0.0
            };
        }
        Ok(v)
    }

    /// Uniform mass on `[-R, R]` of `[t - r, t + r]`.
    fn coord_mass(&self, t: f64, radius: f64) -> f64 {
        let rho = radius / self.r;
        let u = t.abs() / self.r;
        0.5 * ((1.0 - u).min(rho) + (1.0 + u).min(rho))
    }

    /// `π(|θ' - θ|_∞ ≤ r)`, factored over coordinates.
    pub fn ball_mass(&self, theta: &[f64], radius: f64) -> Result<f64> {
        self.check(theta)?;
        if !(radius > 0.0) {
            return arg("radius must be positive");
        }
        let k = self.k as f64;
        let mut v = (-k * (1.0 / k).ln_1p()).exp();
        for t in theta {
            let off = if t.abs() <= radius { 1.0 } else { 0.0 };
            v *= off + self.coord_mass(*t, radius) / k;
        }
        Ok(v)
    }

    /// Same as [`Self::ball_mass`] by enumerating all `2^k` supports.
    pub fn ball_mass_enumerated(&self, theta: &[f64], radius: f64) -> Result<f64> {
        if self.k > 24 {
            return arg("enumeration is limited to k <= 24");
        }
        let mut total = 0.0;
        let mut mask = vec![false; self.k];
        for bits in 0u64..(1u64 << self.k) {
            let mut size = 0;
            for (i, slot) in mask.iter_mut().enumerate() {
                *slot = bits >> i & 1 == 1;
                size += *slot as usize;
            }
            total += (-self.log_penalty(size)).exp() * self.subset_ball_mass(theta, &mask, radius)?;
        }
        Ok(total)
    }

    /// Draw `θ` from the prior.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let p_in = 1.0 / (self.k as f64 + 1.0);
        (0..self.k)
            .map(|_| {
                if rng.random::<f64>() < p_in {
                    rng.random_range(-self.r..=self.r)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Monte-Carlo ball mass with its standard error.
    pub fn ball_mass_mc(&self, theta: &[f64], radius: f64, draws: usize, rng: &mut impl Rng) -> Result<(f64, f64)> {
        self.check(theta)?;
        let hits = (0..draws)
            .filter(|_| {
                let t = self.sample(rng);
                t.iter().zip(theta).all(|(a, b)| (a - b).abs() <= radius)
            })
            .count();
        let p = hits as f64 / draws as f64;
        Ok((p, (p * (1.0 - p) / draws as f64).sqrt()))
    }

    /// The prior pushed to isotropic Gaussians `N(θ, σ² I_k)`.
    pub fn gaussian_prior(&self, sigma: f64) -> Result<SampledPrior> {
        if !(sigma > 0.0) {
            return arg("sigma must be positive");
        }
        let me = *self;
        Ok(SampledPrior::new(
            move |rng: &mut ChaCha8Rng| {
                let t = me.sample(rng);
                let d = Density::iso_gaussian(t.clone(), sigma).expect("valid mean");
                Atom::new(t, d)
            },
            |_| 0.0,
        ))
    }
}

/// `B_k = k/(8σ²)` for the Gaussian location model.
pub fn gaussian_hellinger_constant(k: usize, sigma: f64) -> f64 {
    k as f64 / (8.0 * sigma * sigma)
}

/// `approx + (s log(2kR (n B_k)^{1/(2α)}) + ξ)/n` for a support of size `s`.
#[allow(clippy::too_many_arguments)]
pub fn sparsity_radius(
    k: usize,
    r: f64,
    bk: f64,
    alpha: f64,
    n: usize,
    xi: f64,
    support: usize,
    approx: f64,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) || !(bk > 0.0) || n == 0 || k == 0 {
        return arg("need alpha in (0, 1], B_k > 0, n, k >= 1");
    }
    if r * bk.powf(1.0 / (2.0 * alpha)) < 1.0 {
        return arg("need R B_k^(1/(2 alpha)) >= 1");
    }
    if support > k {
        return arg("support larger than the dimension");
    }
    let nf = n as f64;
    let log_term = (2.0 * k as f64 * r * (nf * bk).powf(1.0 / (2.0 * alpha))).ln();
    Ok(approx + (support as f64 * log_term + xi) / nf)
}
