//! Explicit constants of the two concentration theorems.
//!
//! [`thm1_constants`] covers families that only satisfy the mean inequality;
//! [`thm2_constants`] adds the variance constant `a2` and the inverse
//! temperature `β`. Both return a [`ConstantLedger`] with every intermediate
//! quantity, so a caller can audit how `κ0` was obtained.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};

/// `2(e^z - 1 - z) / z²`, increasing on `(0, ∞)` with limit 1 at 0.
pub fn phi(z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return arg(format!("phi needs z > 0, got {z}"));
    }
    if z > 700.0 {
        return Err(Error::Overflow(format!("phi({z})")));
    }
    if z < 1e-4 {
        return Ok(1.0 + z / 3.0 + z * z / 12.0);
    }
    Ok(2.0 * (z.exp_m1() - z) / (z * z))
}

/// Inputs of a ledger. `a2` and `beta` are only used by the second theorem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerInputs {
    pub a0: f64,
    pub a1: f64,
    pub a2: Option<f64>,
    pub tau: f64,
    pub c: f64,
    pub gamma: f64,
    pub beta: Option<f64>,
}

/// Named input sets for the worked corollaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Total variation, first theorem.
    Tv,
    /// Squared Hellinger, second theorem.
    Hellinger,
    /// Total variation with `a2 = 1` on the power-law translation model.
    PowerLawTv,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "tv" => Ok(Preset::Tv),
            "hellinger" => Ok(Preset::Hellinger),
            "power_law_tv" | "powerlaw-tv" => Ok(Preset::PowerLawTv),
            _ => Err(Error::Config(format!("unknown constants preset `{name}`"))),
        }
    }

    pub fn inputs(self) -> LedgerInputs {
        match self {
            Preset::Tv => LedgerInputs {
                a0: 1.5,
                a1: 0.5,
                a2: None,
                tau: 1.0,
                c: 1.0 / 3.0,
                gamma: 0.01,
                beta: None,
            },
            Preset::Hellinger => LedgerInputs {
                a0: 2.0,
                a1: 3.0 / 16.0,
                a2: Some(3.0 * 2f64.sqrt() / 4.0),
                tau: 2.0,
                c: 1.0 / 125.0,
                gamma: 1.0 / 1000.0,
                beta: Some(1.0 / 500.0),
            },
            Preset::PowerLawTv => LedgerInputs {
                a0: 1.5,
                a1: 0.5,
                a2: Some(1.0),
                tau: 1.0,
                c: 0.1,
                gamma: 0.01,
                beta: Some(0.1),
            },
        }
    }

    /// Ledger for the theorem the preset belongs to.
    pub fn ledger(self) -> Result<ConstantLedger> {
        let i = self.inputs();
        match (i.a2, i.beta) {
            (Some(a2), Some(beta)) => thm2_constants(i.a0, i.a1, a2, i.tau, i.c, i.gamma, beta),
            _ => thm1_constants(i.a0, i.a1, i.tau, i.c, i.gamma),
        }
    }
}

/// Feasibility of the tuning constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feasibility {
    /// `c0 > 0`.
    pub c0_positive: bool,
    /// `γ` below the theorem's bound.
    pub gamma_ok: bool,
    /// `β < β0` (always true for the first theorem).
    pub beta_ok: bool,
}

impl Feasibility {
    pub fn all(&self) -> bool {
        self.c0_positive && self.gamma_ok && self.beta_ok
    }
}

/// Every constant appearing in the proofs, with the resulting `κ0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantLedger {
    pub theorem: u8,
    pub inputs: LedgerInputs,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c0_prime: f64,
    pub l1: f64,
    pub l2: f64,
    pub e0: f64,
    pub e1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e2: Option<f64>,
    #[serde(rename = "C1", skip_serializing_if = "Option::is_none")]
    pub big_c1: Option<f64>,
    #[serde(rename = "C2", skip_serializing_if = "Option::is_none")]
    pub big_c2: Option<f64>,
    #[serde(rename = "C3", skip_serializing_if = "Option::is_none")]
    pub big_c3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cbar1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cbar2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cbar3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e4: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e5: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e6: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e7: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e8: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xibar1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xibar2: Option<f64>,
    /// Smallest root of `min(c̄1, c̄2, c̄3)`; `None` if it lies beyond the
    /// range where `phi` is finite.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta0: Option<f64>,
    pub feasible: Feasibility,
    /// `None` when infeasible.
    pub kappa0: Option<f64>,
}

impl ConstantLedger {
    /// The theorem's `κ0` rounded up, as quoted in applications.
    pub fn kappa0_ceil(&self) -> Option<f64> {
        self.kappa0.map(f64::ceil)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ledger serializes")
    }
}

fn check_common(a0: f64, a1: f64, tau: f64, c: f64, gamma: f64) -> Result<()> {
    for (name, v) in [("a0", a0), ("a1", a1), ("tau", tau), ("c", c), ("gamma", gamma)] {
        if !(v > 0.0) || !v.is_finite() {
            return arg(format!("{name} must be positive and finite, got {v}"));
        }
    }
    if a1 > a0 {
        return arg(format!("need a1 <= a0, got a0={a0}, a1={a1}"));
    }
    Ok(())
}

/// `c0 = (1 + c) - c a0/a1`, evaluated as `c (1/c + (1 - a0/a1))`, which
/// rounds to the exact value at the worked inputs and when `a0 = a1`.
pub fn c0_of(a0: f64, a1: f64, c: f64) -> f64 {
    c * (1.0 / c + (1.0 - a0 / a1))
}

fn base(inputs: LedgerInputs, theorem: u8) -> ConstantLedger {
    let LedgerInputs { a0, a1, tau, c, .. } = inputs;
    let r = a0 / a1;
    let c0 = c0_of(a0, a1, c);
    let c1 = 1.0 + c;
    let c2 = 2.0 + c;
    let c0_prime = c2 * r - c1;
    ConstantLedger {
        theorem,
        inputs,
        c0,
        c1,
        c2,
        c0_prime,
        l1: 1.0 + 2.0 * c,
        l2: 3.0 + 2.0 * c,
        e0: c0 + c + tau * c1 * r,
        e1: tau * (c0_prime + c1 * r),
        e2: None,
        big_c1: None,
        big_c2: None,
        big_c3: None,
        xi1: None,
        xi2: None,
        lambda1: None,
        lambda2: None,
        cbar1: None,
        cbar2: None,
        cbar3: None,
        e3: None,
        e4: None,
        e5: None,
        e6: None,
        e7: None,
        e8: None,
        xibar1: None,
        xibar2: None,
        beta0: None,
        feasible: Feasibility {
            c0_positive: c0 > 0.0,
            gamma_ok: false,
            beta_ok: true,
        },
        kappa0: None,
    }
}

/// `log[1 + e^{-(m/τ - γ)} / (1 - e^{-(m/τ - 2γ)})]`.
fn xi_tail(m: f64, tau: f64, gamma: f64) -> f64 {
    let num = (-(m / tau - gamma)).exp();
    let den = -(-(m / tau - 2.0 * gamma)).exp_m1();
    (num / den).ln_1p()
}

/// `-γ + log[1 / (1 - e^{-e})]`.
fn xi_geom(e: f64, gamma: f64) -> f64 {
    -gamma - (-(-e).exp_m1()).ln()
}

/// Ledger for the first theorem. Feasibility requires `c0 > 0` and
/// `γ < (c0 ∧ c) / (2τ)`; otherwise `kappa0` is `None`.
pub fn thm1_constants(a0: f64, a1: f64, tau: f64, c: f64, gamma: f64) -> Result<ConstantLedger> {
    check_common(a0, a1, tau, c, gamma)?;
    let inputs = LedgerInputs {
        a0,
        a1,
        a2: None,
        tau,
        c,
        gamma,
        beta: None,
    };
    let mut l = base(inputs, 1);
    let r = a0 / a1;
    l.feasible.gamma_ok = gamma < l.c0.min(c) / (2.0 * tau);
    let e2 = l.c0 / tau - 2.0 * gamma;
    let big_c1 = l.e0 + l.e1 + l.c2;
    let big_c2 = l.e1 + tau * l.c1 * r;
    let big_c3 = 1f64.max(big_c1).max((l.l1 * l.l1 + l.l2 * l.l2) / 8.0);
    l.e2 = Some(e2);
    l.big_c1 = Some(big_c1);
    l.big_c2 = Some(big_c2);
    l.big_c3 = Some(big_c3);
    if l.feasible.all() {
        let xi1 = xi_tail(c, tau, gamma);
        let xi2 = xi_geom(e2, gamma);
        l.xi1 = Some(xi1);
        l.xi2 = Some(xi2);
        let core = 2.0 * (big_c2 + 2.0 * xi1 + xi2 + big_c3) / e2;
        l.kappa0 = Some(tau * (core.max(1.0) + 1.0));
    }
    Ok(l)
}

/// `(c̄1, c̄2, c̄3)` at a given `β`.
pub fn cbar(a0: f64, a1: f64, a2: f64, tau: f64, c: f64, beta: f64) -> Result<(f64, f64, f64)> {
    let c0 = c0_of(a0, a1, c);
    let c1 = 1.0 + c;
    let c2 = 2.0 + c;
    let lam1 = tau * phi(beta * (1.0 + 2.0 * c))?;
    let lam2 = tau * phi(beta * (3.0 + 2.0 * c))?;
    let k = beta * a2 / a1;
    Ok((
        c0 - tau * lam1 * k * (c * c + c1 * c1),
        c - tau * lam1 * k * c * c,
        c2 - tau * lam2 * k * c2 * c2,
    ))
}

fn cbar_min(a0: f64, a1: f64, a2: f64, tau: f64, c: f64, beta: f64) -> Option<f64> {
    cbar(a0, a1, a2, tau, c, beta).ok().map(|(x, y, z)| x.min(y).min(z))
}

/// Smallest positive root of `β ↦ min(c̄1, c̄2, c̄3)` by bisection.
///
/// The bracket starts at `(0, 1]` and is doubled while the minimum stays
/// positive. Returns `Ok(None)` when `c0 <= 0` (no admissible `β`) and
/// `Err(Overflow)` if the root lies past the range where `phi` is finite.
pub fn beta0(a0: f64, a1: f64, a2: f64, tau: f64, c: f64) -> Result<Option<f64>> {
    check_common(a0, a1, tau, c, 1.0)?;
    if !(a2 > 0.0) {
        return arg(format!("a2 must be positive, got {a2}"));
    }
    if c0_of(a0, a1, c) <= 0.0 {
        return Ok(None);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        match cbar_min(a0, a1, a2, tau, c, hi) {
            Some(v) if v > 0.0 => {
                lo = hi;
                hi *= 2.0;
            }
            Some(_) => break,
            None => {
                // phi overflowed; step back until finite, then the root is
                // either inside or unreachable.
                let mut h = hi;
                while cbar_min(a0, a1, a2, tau, c, h).is_none() && h > lo {
                    h = 0.5 * (lo + h);
                }
                match cbar_min(a0, a1, a2, tau, c, h) {
                    Some(v) if v <= 0.0 => {
                        hi = h;
                        break;
                    }
                    _ => return Err(Error::Overflow("beta0 bracket".into())),
                }
            }
        }
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        match cbar_min(a0, a1, a2, tau, c, mid) {
            Some(v) if v > 0.0 => lo = mid,
            _ => hi = mid,
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Ledger for the second theorem. Feasibility requires `0 < β < β0`,
/// all `c̄i > 0` and `γ < min(c̄i) / (2τ)`.
pub fn thm2_constants(a0: f64, a1: f64, a2: f64, tau: f64, c: f64, gamma: f64, beta: f64) -> Result<ConstantLedger> {
    check_common(a0, a1, tau, c, gamma)?;
    if !(a2 > 0.0) || !(beta > 0.0) {
        return arg(format!("a2 and beta must be positive, got a2={a2}, beta={beta}"));
    }
    let inputs = LedgerInputs {
        a0,
        a1,
        a2: Some(a2),
        tau,
        c,
        gamma,
        beta: Some(beta),
    };
    let mut l = base(inputs, 2);
    let (c1, c2) = (l.c1, l.c2);
    let lam1 = tau * phi(beta * l.l1)?;
    let lam2 = tau * phi(beta * l.l2)?;
    let k = beta * a2 / a1;
    let cb1 = l.c0 - tau * lam1 * k * (c * c + c1 * c1);
    let cb2 = c - tau * lam1 * k * c * c;
    let cb3 = c2 - tau * lam2 * k * c2 * c2;
    let cmin = cb1.min(cb2).min(cb3);
    l.lambda1 = Some(lam1);
    l.lambda2 = Some(lam2);
    l.cbar1 = Some(cb1);
    l.cbar2 = Some(cb2);
    l.cbar3 = Some(cb3);
    l.beta0 = beta0(a0, a1, a2, tau, c).ok().flatten();
    l.feasible.beta_ok = cmin > 0.0;
    l.feasible.gamma_ok = gamma < cmin / (2.0 * tau);

    let e3 = l.e0 + 2.0 * lam1 * k * (c * c + c1 * c1);
    let e4 = (tau * c1 * a0 + lam1 * beta * a2 * c1 * c1) / a1;
    let e5 = l.e1 + c2 + 2.0 * lam2 * k * (c2 * c2 + c1 * c1);
    let e6 = tau * l.c0_prime + lam2 * k * (c2 * c2 + c1 * c1);
    let e7 = (tau * c1 * a0 + lam2 * beta * a2 * c1 * c1) / a1;
    let e8 = cb1 / tau - 2.0 * gamma;
    l.e3 = Some(e3);
    l.e4 = Some(e4);
    l.e5 = Some(e5);
    l.e6 = Some(e6);
    l.e7 = Some(e7);
    l.e8 = Some(e8);
    if l.feasible.all() {
        let xb1 = xi_tail(cb2.min(cb3), tau, gamma);
        let xb2 = xi_geom(e8, gamma);
        l.xibar1 = Some(xb1);
        l.xibar2 = Some(xb2);
        let core = 2.0 * (2.0 * xb1 + xb2 + e4 + e6 + e7 + (e3 + e5).max(1.0)) / e8;
        l.kappa0 = Some(tau * (core.max(1.0) + 1.0));
    }
    Ok(l)
}

fn check_radius(beta: f64, n: f64, xi: f64, a1: f64, approx: f64) -> Result<()> {
    if !(beta > 0.0 && n > 0.0 && a1 > 0.0) {
        return arg("beta, n and a1 must be positive");
    }
    if !(xi >= 0.0 && approx >= 0.0) {
        return arg("xi and approx must be nonnegative");
    }
    Ok(())
}

/// First theorem radius: `approx + (β + 2ξ/(nβ)) / a1`.
pub fn radius_thm1(approx: f64, beta: f64, n: f64, xi: f64, a1: f64) -> Result<f64> {
    check_radius(beta, n, xi, a1, approx)?;
    Ok(approx + (beta + 2.0 * xi / (n * beta)) / a1)
}

/// Second theorem radius: `approx + r_n + 2ξ/(nβ a1)`.
pub fn radius_thm2(approx: f64, rn: f64, beta: f64, n: f64, xi: f64, a1: f64) -> Result<f64> {
    check_radius(beta, n, xi, a1, approx)?;
    if !(rn >= 0.0) {
        return arg("rn must be nonnegative");
    }
    Ok(approx + rn + 2.0 * xi / (n * beta * a1))
}

/// Smallest admissible concentration radius, `1/(nβ a1)`.
pub fn radius_floor(n: f64, beta: f64, a1: f64) -> f64 {
    1.0 / (n * beta * a1)
}

/// Exponent rate `γ n β a1` in the prior doubling condition, per unit radius.
pub fn doubling_rate(gamma: f64, n: f64, beta: f64, a1: f64) -> f64 {
    gamma * n * beta * a1
}
