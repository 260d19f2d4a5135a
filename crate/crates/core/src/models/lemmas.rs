//! Shift and scale regularity of the TV loss, measured against the bounds
//! for monotone and Hölder base densities.

use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{arg, Result};
use crate::loss::tv_distance;

/// Bounds and measured TV distances for one `(p, m, σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftScaleCheck {
    /// `TV(p, σ^-1 p(·/σ)) ≤ 1 - 1/σ`.
    pub scale_bound: f64,
    pub scale_measured: f64,
    /// `TV(p, p(· - m)) ≤ (|m| B) ∧ 1`.
    pub shift_bound: f64,
    pub shift_measured: f64,
    /// `TV(p, σ^-1 p((· - m)/σ)) ≤ [B|m/σ| + 1 - 1/σ] ∧ 1`.
    pub bound: f64,
    pub measured: f64,
}

impl ShiftScaleCheck {
    /// Smallest `bound - measured` over the three inequalities.
    pub fn slack(&self) -> f64 {
        (self.scale_bound - self.scale_measured)
            .min(self.shift_bound - self.shift_measured)
            .min(self.bound - self.measured)
    }
}

const PROBES: usize = 2000;

/// Checks on a probe grid that `p` vanishes on `(-∞, 0]`, is nonincreasing
/// on `(0, ∞)` and bounded by `b`.
pub fn check_monotone(p: &Density, b: f64) -> Result<()> {
    if p.dim() != 1 || !(b >= 1.0) {
        return arg("need a 1-D density and B >= 1");
    }
    let (_, hi) = p.effective_range1(1e-12);
    let hi = hi.max(1e-9);
    let tol = 1e-12 * b;
    let mut prev = f64::INFINITY;
    for i in 1..=PROBES {
        let x = hi * i as f64 / PROBES as f64;
        let v = p.pdf1(x);
        if v > b + tol || v > prev + tol {
            return arg(format!("density is not nonincreasing and bounded by {b} near x = {x}"));
        }
        prev = v;
        if p.pdf1(-x) > 0.0 {
            return arg(format!("density is positive at x = {}", -x));
        }
    }
    Ok(())
}

/// Measures the three monotone-density inequalities (`σ ≥ 1`).
pub fn tv_scale_shift_bounds(p: &Density, b: f64, m: f64, sigma: f64) -> Result<ShiftScaleCheck> {
    if !(sigma >= 1.0) || !m.is_finite() {
        return arg("need sigma >= 1 and a finite shift");
    }
    check_monotone(p, b)?;
    let scaled = Density::loc_scale(p.clone(), vec![0.0], sigma)?;
    let shifted = Density::loc_scale(p.clone(), vec![m], 1.0)?;
    let both = Density::loc_scale(p.clone(), vec![m], sigma)?;
    let shrink = 1.0 - 1.0 / sigma;
    Ok(ShiftScaleCheck {
        scale_bound: shrink,
        scale_measured: tv_distance(p, &scaled)?,
        shift_bound: (m.abs() * b).min(1.0),
        shift_measured: tv_distance(p, &shifted)?,
        bound: (b * (m / sigma).abs() + shrink).min(1.0),
        measured: tv_distance(p, &both)?,
    })
}

/// `A = L1 ∨ (1 + L1 k^{α/2} + L0)/2`.
pub fn holder_constant(l0: f64, l1: f64, alpha: f64, k: usize) -> f64 {
    l1.max((1.0 + l1 * (k as f64).powf(alpha / 2.0) + l0) / 2.0)
}

/// `[A(|m/σ|_∞^α + (1 - 1/σ)^α)] ∧ 1`.
pub fn shift_scale_bound(a: f64, alpha: f64, m: &[f64], sigma: f64) -> f64 {
    let ms = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())) / sigma;
    (a * (ms.powf(alpha) + (1.0 - 1.0 / sigma).powf(alpha))).min(1.0)
}

/// Bound and measured TV for a 1-D Hölder density supported on `[0, 1]`.
pub fn holder_shift_scale(p: &Density, l0: f64, l1: f64, alpha: f64, m: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(sigma >= 1.0) || !(alpha > 0.0 && alpha <= 1.0) {
        return arg("need sigma >= 1 and alpha in (0, 1]");
    }
    let (lo, hi) = p.support1();
    if lo < 0.0 || hi > 1.0 {
        return arg("Hölder density must be supported on [0, 1]");
    }
    let bound = shift_scale_bound(holder_constant(l0, l1, alpha, 1), alpha, &[m], sigma);
    let moved = Density::loc_scale(p.clone(), vec![m], sigma)?;
    Ok((bound, tv_distance(p, &moved)?))
}

/// Sup norm and Hölder constant of a bump with the given half width and exponent.
pub fn bump_constants(half_width: f64, alpha: f64) -> (f64, f64) {
    let c = (alpha + 1.0) / (2.0 * half_width.powf(alpha + 1.0));
    (c * half_width.powf(alpha), c)
}
