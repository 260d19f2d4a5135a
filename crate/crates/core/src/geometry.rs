//! Prior geometry: ball masses, doubling ratios and concentration radii.
//!
//! The concentration radius `r_n(β, P)` is the smallest `r ≥ 1/(nβ a1)` such
//! that `π(B(P, 2r')) ≤ exp(γ n β a1 r') π(B(P, r'))` for every `r' ≥ r`, with
//! `a/0 = +inf`. Ball masses are step functions of the radius, so the check
//! points are a geometric grid plus every radius where one of the two masses
//! jumps; a violation anywhere on a constancy interval shows up at its left
//! end, which makes the scan exact for finite and empirical priors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{arg, Error, Result};
use crate::loss::LossSpec;
use crate::models::translation::TranslationFamily;
use crate::posterior::{Atom, FinitePrior, SampledPrior};

/// Masses at or above this level count as saturated.
pub const SATURATION: f64 = 1.0 - 1e-9;
/// Default ratio of the radius grid.
pub const GRID_RATIO: f64 = 1.05;
const WILSON_Z: f64 = 1.959_963_984_540_054;

/// A ball mass with a confidence interval (degenerate for exact masses).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl MassEstimate {
    pub fn exact(v: f64) -> Self {
        Self { value: v, lo: v, hi: v }
    }
}

/// Wilson score interval for a proportion `p` observed on `n` trials.
pub fn wilson(p: f64, n: f64) -> (f64, f64) {
    if n <= 0.0 {
        return (0.0, 1.0);
    }
    let z2 = WILSON_Z * WILSON_Z;
    let den = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / den;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Masses of the balls around one centre as a function of the radius.
#[derive(Debug, Clone)]
pub struct DistanceProfile {
    dists: Vec<f64>,
    cum: Vec<f64>,
    /// Trials behind the Wilson interval; `None` for exact masses.
    trials: Option<f64>,
}

impl DistanceProfile {
    /// Exact profile from distances and (unnormalized) weights.
    pub fn exact(dists: &[f64], weights: &[f64]) -> Result<Self> {
        Self::build(dists, weights, None)
    }

    /// Monte-Carlo profile from sampled distances and importance weights.
    ///
    /// With equal weights the interval is Wilson's on the sample size; with
    /// unequal weights the Kish effective sample size is used instead.
    pub fn sampled(dists: &[f64], weights: &[f64]) -> Result<Self> {
        let s: f64 = weights.iter().sum();
        let s2: f64 = weights.iter().map(|w| w * w).sum();
        Self::build(dists, weights, Some(s * s / s2))
    }

    fn build(dists: &[f64], weights: &[f64], trials: Option<f64>) -> Result<Self> {
        if dists.is_empty() || dists.len() != weights.len() {
            return arg("profile needs one weight per distance");
        }
        if dists.iter().any(|d| !(*d >= 0.0)) || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return arg("distances and weights must be nonnegative");
        }
        let mut idx: Vec<usize> = (0..dists.len()).collect();
        idx.sort_by(|a, b| dists[*a].total_cmp(&dists[*b]));
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return arg("profile has zero total weight");
        }
        let mut acc = 0.0;
        let mut cum = Vec::with_capacity(idx.len());
        for i in &idx {
            acc += weights[*i] / total;
            cum.push(acc);
        }
        let last = cum.len() - 1;
        cum[last] = 1.0;
        Ok(Self {
            dists: idx.iter().map(|i| dists[*i]).collect(),
            cum,
            trials,
        })
    }

    /// Point estimate of `π(B(P, r))`.
    pub fn value(&self, r: f64) -> f64 {
        let k = self.dists.partition_point(|d| *d <= r);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1]
        }
    }

    pub fn mass(&self, r: f64) -> MassEstimate {
        let v = self.value(r);
        match self.trials {
            None => MassEstimate::exact(v),
            Some(n) => {
                let (lo, hi) = wilson(v, n);
                MassEstimate { value: v, lo, hi }
            }
        }
    }

    /// Radii where the mass jumps.
    pub fn jumps(&self) -> &[f64] {
        &self.dists
    }

    pub fn is_exact(&self) -> bool {
        self.trials.is_none()
    }
}

/// Borrowed prior of either kind.
#[derive(Debug, Clone, Copy)]
pub enum PriorRef<'a> {
    Finite(&'a FinitePrior),
    Sampled(&'a SampledPrior),
}

/// Profile of `π(B(center, ·))` under `dist`. Sampled priors use `budget`
/// draws from `ν` weighted by `Π`.
pub fn profile_with(
    prior: PriorRef<'_>,
    center: &Density,
    budget: usize,
    seed: u64,
    dist: impl Fn(&Density, &Density) -> Result<f64> + Sync,
) -> Result<DistanceProfile> {
    match prior {
        PriorRef::Finite(p) => {
            let d = p
                .atoms
                .par_iter()
                .map(|a| dist(center, &a.density))
                .collect::<Result<Vec<f64>>>()?;
            DistanceProfile::exact(&d, &p.weights())
        }
        PriorRef::Sampled(s) => {
            if budget == 0 {
                return arg("sampled ball masses need a positive budget");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let draws: Vec<Atom> = (0..budget).map(|_| s.draw(&mut rng)).collect();
            let lr: Vec<f64> = draws.iter().map(|a| s.log_ratio(a)).collect();
            let m = lr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !m.is_finite() {
                return Err(Error::DegenerateWeights);
            }
            let w: Vec<f64> = lr.iter().map(|v| (v - m).exp()).collect();
            let d = draws
                .par_iter()
                .map(|a| dist(center, &a.density))
                .collect::<Result<Vec<f64>>>()?;
            DistanceProfile::sampled(&d, &w)
        }
    }
}

/// `π(B(center, r))`: exact for finite priors, Monte Carlo with a Wilson 95%
/// interval for sampled ones.
pub fn ball_mass(
    prior: PriorRef<'_>,
    loss: &LossSpec,
    center: &Density,
    r: f64,
    budget: usize,
    seed: u64,
) -> Result<MassEstimate> {
    if !(r >= 0.0) {
        return arg(format!("radius must be nonnegative, got {r}"));
    }
    Ok(profile_with(prior, center, budget, seed, |a, b| loss.eval(a, b))?.mass(r))
}

/// `V(P, r) = log[π(B(P, 2r)) / π(B(P, r))]`; `+inf` when the inner ball is empty.
pub fn log_ratio_v(profile: &DistanceProfile, r: f64) -> f64 {
    let inner = profile.value(r);
    if inner <= 0.0 {
        return f64::INFINITY;
    }
    (profile.value(2.0 * r) / inner).ln()
}

/// Parameters of a radius scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusQuery {
    pub beta: f64,
    pub gamma: f64,
    pub n: usize,
    pub a1: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub ratio: f64,
}

impl RadiusQuery {
    /// Grid from the floor `1/(nβ a1)` to 1 with ratio 1.05.
    pub fn new(beta: f64, gamma: f64, n: usize, a1: f64) -> Result<Self> {
        if !(beta > 0.0 && gamma > 0.0 && a1 > 0.0 && n >= 1) {
            return arg("beta, gamma, a1 must be positive and n >= 1");
        }
        let floor = 1.0 / (n as f64 * beta * a1);
        Ok(Self {
            beta,
            gamma,
            n,
            a1,
            r_min: floor,
            r_max: floor.max(1.0),
            ratio: GRID_RATIO,
        })
    }

    pub fn with_grid(mut self, r_min: f64, r_max: f64, ratio: f64) -> Result<Self> {
        if r_min < self.floor() * (1.0 - 1e-12) {
            return arg(format!("r_min {r_min} below the floor {}", self.floor()));
        }
        if !(ratio > 1.0 && ratio <= 2.0) || !(r_max >= r_min) {
            return arg("need 1 < ratio <= 2 and r_max >= r_min");
        }
        self.r_min = r_min;
        self.r_max = r_max;
        self.ratio = ratio;
        Ok(self)
    }

    /// `1/(nβ a1)`.
    pub fn floor(&self) -> f64 {
        1.0 / (self.n as f64 * self.beta * self.a1)
    }

    /// `γ n β a1`.
    pub fn rate(&self) -> f64 {
        self.gamma * self.n as f64 * self.beta * self.a1
    }

    pub fn grid(&self) -> Vec<f64> {
        let mut g = Vec::new();
        let mut k = 0i32;
        loop {
            let r = self.r_min * self.ratio.powi(k);
            if r > self.r_max * (1.0 + 1e-12) {
                break;
            }
            g.push(r);
            k += 1;
        }
        g
    }
}

/// One line of a radius profile table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusRow {
    pub r: f64,
    pub mass_r: f64,
    pub mass_2r: f64,
    #[serde(rename = "V")]
    pub v: f64,
    /// `γ n β a1 r`.
    pub bound: f64,
    pub ok: bool,
}

impl RadiusRow {
    pub const CSV_HEADER: &'static str = "r,mass_r,mass_2r,V,bound,ok";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.r, self.mass_r, self.mass_2r, self.v, self.bound, self.ok
        )
    }
}

/// Outcome of [`concentration_radius`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusResult {
    /// Grid upper bound on `r_n`; `None` means "exceeds `r_max`".
    pub radius: Option<f64>,
    pub floor: f64,
    /// First radius where the inner ball has mass at least [`SATURATION`].
    pub saturated_at: Option<f64>,
    /// `true` when saturation was declared below mass 1.
    pub tail_approximated: bool,
    /// Grid rows up to saturation.
    pub rows: Vec<RadiusRow>,
}

fn check_at(profile: &DistanceProfile, r: f64, rate: f64) -> RadiusRow {
    let inner = profile.mass(r);
    let outer = profile.mass(2.0 * r);
    let bound = rate * r;
    let ok = inner.lo > 0.0 && (outer.hi.ln() - inner.lo.ln()) <= bound;
    let v = if inner.value > 0.0 {
        (outer.value / inner.value).ln()
    } else {
        f64::INFINITY
    };
    RadiusRow {
        r,
        mass_r: inner.value,
        mass_2r: outer.value,
        v,
        bound,
        ok,
    }
}

fn check_points(profile: &DistanceProfile, from: f64, grid: &[f64]) -> Vec<(f64, bool)> {
    let mut pts: Vec<(f64, bool)> = grid.iter().map(|r| (*r, true)).collect();
    for d in profile.jumps() {
        for b in [*d, 0.5 * d] {
            if b >= from {
                pts.push((b, false));
            }
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    pts
}

/// Upper bound on `r_n(β, P)` on the query's geometric grid.
///
/// Returns the smallest grid radius from which the doubling condition holds
/// at every grid radius and every mass jump up to saturation. For sampled
/// profiles the inner mass uses the lower and the outer mass the upper end
/// of the Wilson interval.
pub fn concentration_radius(q: &RadiusQuery, profile: &DistanceProfile) -> RadiusResult {
    let grid = q.grid();
    let rate = q.rate();
    let mut rows = Vec::new();
    let mut last_fail: Option<f64> = None;
    let mut saturated_at = None;
    for (r, on_grid) in check_points(profile, q.r_min, &grid) {
        if r > q.r_max * (1.0 + 1e-12) {
            break;
        }
        let row = check_at(profile, r, rate);
        if on_grid {
            rows.push(row);
        }
        if profile.mass(r).lo >= SATURATION {
            saturated_at = Some(r);
            break;
        }
        if !row.ok {
            last_fail = Some(r);
        }
    }
    let tail_approximated = saturated_at.is_some_and(|r| profile.value(r) < 1.0);
    let radius = match (saturated_at, last_fail) {
        (None, _) => None,
        (Some(_), None) => grid.first().copied(),
        (Some(_), Some(f)) => grid.iter().copied().find(|g| *g > f),
    };
    RadiusResult {
        radius,
        floor: q.floor(),
        saturated_at,
        tail_approximated,
        rows,
    }
}

/// Exact `r_n(β, P)` for an exact profile, solving the doubling condition on
/// each interval where both masses are constant.
pub fn exact_radius(profile: &DistanceProfile, rate: f64, floor: f64) -> Result<f64> {
    if !profile.is_exact() {
        return arg("exact radius needs an exact profile");
    }
    let mut b: Vec<f64> = vec![0.0];
    for d in profile.jumps() {
        b.push(*d);
        b.push(0.5 * d);
    }
    b.sort_by(f64::total_cmp);
    b.dedup();
    let mut sup_fail: f64 = 0.0;
    for k in 0..b.len() {
        let left = b[k];
        let right = b.get(k + 1).copied().unwrap_or(f64::INFINITY);
        let m1 = profile.value(left);
        let m2 = profile.value(2.0 * left);
        if m1 <= 0.0 {
            sup_fail = sup_fail.max(right);
            continue;
        }
        let x = (m2 / m1).ln() / rate;
        if x > left {
            sup_fail = sup_fail.max(x.min(right));
        }
    }
    Ok(sup_fail.max(floor))
}

/// `true` iff the doubling condition holds at every check point `≥ β/a1`,
/// i.e. `r_n(β, P) ≤ β/a1`. Needs `β ≥ 1/√n`.
pub fn favored_set_member(profile: &DistanceProfile, beta: f64, gamma: f64, n: usize, a1: f64) -> Result<bool> {
    if beta * (n as f64).sqrt() < 1.0 - 1e-12 {
        return Err(Error::Precondition(format!(
            "beta = {beta} is below 1/sqrt(n) = {}",
            1.0 / (n as f64).sqrt()
        )));
    }
    let q = RadiusQuery::new(beta, gamma, n, a1)?;
    let anchor = beta / a1;
    let rate = q.rate();
    for (r, _) in check_points(profile, anchor, &[anchor]) {
        if profile.mass(r).lo >= SATURATION {
            return Ok(true);
        }
        if !check_at(profile, r, rate).ok {
            return Ok(false);
        }
    }
    // no saturation among the jumps: the mass never reaches 1
    Ok(false)
}

/// Geometric β grid starting at `1/√n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaGrid {
    pub ratio: f64,
    pub count: usize,
}

impl Default for BetaGrid {
    fn default() -> Self {
        Self {
            ratio: GRID_RATIO,
            count: 400,
        }
    }
}

impl BetaGrid {
    pub fn values(&self, n: usize) -> Vec<f64> {
        let b0 = 1.0 / (n as f64).sqrt();
        (0..self.count).map(|k| b0 * self.ratio.powi(k as i32)).collect()
    }
}

/// Ball-mass profiles around a set of centres, with the prior weight of each.
#[derive(Debug, Clone)]
pub struct PriorGeometry {
    pub profiles: Vec<DistanceProfile>,
    pub center_weights: Vec<f64>,
    /// Trials behind the centre weights; `None` when they are exact.
    pub center_trials: Option<f64>,
}

impl PriorGeometry {
    /// Every atom of a finite prior as centre, from a symmetric distance matrix.
    pub fn from_matrix(prior: &FinitePrior, dists: &[f64]) -> Result<Self> {
        let m = prior.len();
        if dists.len() != m * m {
            return arg("distance matrix must be M x M");
        }
        let w = prior.weights();
        let profiles = (0..m)
            .map(|a| DistanceProfile::exact(&dists[a * m..(a + 1) * m], &w))
            .collect::<Result<_>>()?;
        Ok(Self {
            profiles,
            center_weights: w,
            center_trials: None,
        })
    }

    /// Every atom of a finite prior as centre, distances by `dist`.
    pub fn finite(prior: &FinitePrior, dist: impl Fn(&Density, &Density) -> Result<f64> + Sync) -> Result<Self> {
        let m = prior.len();
        let upper: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|a| {
                (a + 1..m)
                    .map(|b| dist(&prior.atoms[a].density, &prior.atoms[b].density))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let mut d = vec![0.0; m * m];
        for (a, row) in upper.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                d[a * m + a + 1 + k] = *v;
                d[(a + 1 + k) * m + a] = *v;
            }
        }
        Self::from_matrix(prior, &d)
    }

    pub fn finite_loss(prior: &FinitePrior, loss: &LossSpec) -> Result<Self> {
        Self::finite(prior, |a, b| loss.eval(a, b))
    }

    /// `centers` draws from `ν` (weighted by `Π`), each with a ball-mass
    /// profile over a shared reference sample of `budget` draws.
    pub fn sampled(
        prior: &SampledPrior,
        centers: usize,
        budget: usize,
        seed: u64,
        dist: impl Fn(&Density, &Density) -> Result<f64> + Sync,
    ) -> Result<Self> {
        if centers == 0 || budget == 0 {
            return arg("need positive centre count and budget");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reference: Vec<Atom> = (0..budget).map(|_| prior.draw(&mut rng)).collect();
        let cs: Vec<Atom> = (0..centers).map(|_| prior.draw(&mut rng)).collect();
        let weights = |atoms: &[Atom]| -> Result<Vec<f64>> {
            let lr: Vec<f64> = atoms.iter().map(|a| prior.log_ratio(a)).collect();
            let m = lr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !m.is_finite() {
                return Err(Error::DegenerateWeights);
            }
            Ok(lr.iter().map(|v| (v - m).exp()).collect())
        };
        let rw = weights(&reference)?;
        let cw = weights(&cs)?;
        let profiles = cs
            .par_iter()
            .map(|c| {
                let d = reference
                    .iter()
                    .map(|a| dist(&c.density, &a.density))
                    .collect::<Result<Vec<f64>>>()?;
                DistanceProfile::sampled(&d, &rw)
            })
            .collect::<Result<_>>()?;
        let s: f64 = cw.iter().sum();
        let s2: f64 = cw.iter().map(|w| w * w).sum();
        Ok(Self {
            profiles,
            center_weights: cw.iter().map(|w| w / s).collect(),
            center_trials: Some(s * s / s2),
        })
    }

    pub fn members(&self, beta: f64, gamma: f64, n: usize, a1: f64) -> Result<Vec<bool>> {
        self.profiles
            .par_iter()
            .map(|p| favored_set_member(p, beta, gamma, n, a1))
            .collect()
    }

    /// `π(M(β))`, with a Wilson interval for sampled centres.
    pub fn favored_mass(&self, beta: f64, gamma: f64, n: usize, a1: f64) -> Result<MassEstimate> {
        let m = self.members(beta, gamma, n, a1)?;
        let v: f64 = m
            .iter()
            .zip(&self.center_weights)
            .filter(|(ok, _)| **ok)
            .map(|(_, w)| w)
            .sum();
        let v = v.min(1.0);
        Ok(match self.center_trials {
            None => MassEstimate::exact(v),
            Some(t) => {
                let (lo, hi) = wilson(v, t);
                MassEstimate { value: v, lo, hi }
            }
        })
    }
}

/// `β_α`: the smallest grid `β` with `π(M(β)) ≥ 1 - α` (lower interval end
/// for sampled priors). `None` when no grid value qualifies.
pub fn select_beta_alpha(
    geom: &PriorGeometry,
    alpha: f64,
    n: usize,
    a1: f64,
    gamma: f64,
    grid: &BetaGrid,
) -> Result<Option<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return arg(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    for beta in grid.values(n) {
        if geom.favored_mass(beta, gamma, n, a1)?.lo >= 1.0 - alpha {
            return Ok(Some(beta));
        }
    }
    Ok(None)
}

/// Which closed-form bound of the translation model to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslationBound {
    /// `β̄(t)` such that `M(β̄)` contains `{P_θ : |θ| ≤ σt}`.
    BetaBar,
    /// `r̄_n(β, P_θ)`, an upper bound on the concentration radius.
    RnBar,
}

/// `max{log(Γ̄ (σ ∨ 1) / q(2t)), log 4}`.
fn translation_log_term(fam: &TranslationFamily, t: f64) -> Result<f64> {
    if !fam.gamma_bar.is_finite() {
        return Err(Error::UnsupportedFamily("Gamma-bar is not finite".into()));
    }
    let q2t = fam.prior_q.pdf1(2.0 * t);
    if !(q2t > 0.0) {
        return Err(Error::Precondition(format!("q(2t) = 0 at t = {t}")));
    }
    Ok((fam.gamma_bar * fam.sigma.max(1.0) / q2t).ln().max(4f64.ln()))
}

/// Closed-form translation bounds. `value` is `t` for [`TranslationBound::BetaBar`]
/// and `θ` for [`TranslationBound::RnBar`]; `beta` and `a1` are only used by the latter.
pub fn translation_radius_bound(
    fam: &TranslationFamily,
    value: f64,
    n: usize,
    gamma: f64,
    beta: f64,
    a1: f64,
    mode: TranslationBound,
) -> Result<f64> {
    if n == 0 || !(gamma > 0.0) {
        return arg("n and gamma must be positive");
    }
    let n = n as f64;
    match mode {
        TranslationBound::BetaBar => {
            if !(value > 0.0) {
                return arg("t must be positive");
            }
            Ok((translation_log_term(fam, value)? / (n * gamma)).sqrt())
        }
        TranslationBound::RnBar => {
            if !(beta > 0.0 && a1 > 0.0) {
                return arg("beta and a1 must be positive");
            }
            let t = (value.abs() / fam.sigma).max(fam.t0());
            Ok(translation_log_term(fam, t)? / (gamma * n * a1 * beta))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_atoms() -> DistanceProfile {
        DistanceProfile::exact(&[0.1, 0.5, 0.95], &[0.2, 0.3, 0.5]).unwrap()
    }

    #[test]
    fn v_on_enumerated_prior() {
        let p = three_atoms();
        assert!((log_ratio_v(&p, 0.3) - 2.5f64.ln()).abs() < 1e-15);
        assert_eq!(log_ratio_v(&p, 0.05), f64::INFINITY);
        assert_eq!(log_ratio_v(&p, 2.0), 0.0);
    }

    #[test]
    fn wilson_brackets_estimate() {
        let (lo, hi) = wilson(0.3, 100.0);
        assert!(lo < 0.3 && hi > 0.3 && lo > 0.2 && hi < 0.4);
        assert_eq!(wilson(1.0, 50.0).1, 1.0);
    }

    #[test]
    fn saturated_prior_returns_floor() {
        let p = DistanceProfile::exact(&[0.0], &[1.0]).unwrap();
        let q = RadiusQuery::new(0.5, 0.01, 100, 0.5).unwrap();
        let r = concentration_radius(&q, &p);
        assert_eq!(r.radius, Some(q.floor()));
        assert_eq!(exact_radius(&p, q.rate(), q.floor()).unwrap(), q.floor());
    }

    #[test]
    fn grid_radius_brackets_exact() {
        let p = three_atoms();
        let q = RadiusQuery::new(0.2, 0.05, 50, 0.5).unwrap();
        let g = concentration_radius(&q, &p).radius.unwrap();
        let e = exact_radius(&p, q.rate(), q.floor()).unwrap();
        assert!(g >= e && g <= e * q.ratio * (1.0 + 1e-12), "{g} {e}");
    }

    #[test]
    fn membership_excludes_isolated_atom() {
        // centre far from the only heavy cluster: the inner ball stays tiny
        let lone = DistanceProfile::exact(&[0.0, 0.9, 0.9], &[1e-9, 0.5, 0.5]).unwrap();
        let near = DistanceProfile::exact(&[0.0, 0.01, 0.9], &[0.5, 0.49, 0.01]).unwrap();
        assert!(!favored_set_member(&lone, 0.1, 0.01, 100, 0.5).unwrap());
        assert!(favored_set_member(&near, 0.1, 0.01, 100, 0.5).unwrap());
        assert!(matches!(
            favored_set_member(&near, 0.05, 0.01, 100, 0.5),
            Err(Error::Precondition(_))
        ));
    }
}
