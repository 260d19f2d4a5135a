//! Location-scale families over a finite histogram net, with the countable
//! weighted prior over `(net element, scale index, location index)`.
//!
//! The index set is infinite and, even after truncation to prior mass
//! `1 - 1e-6`, far too large to enumerate, so the net is lazy: it exposes
//! closed-form counts and weights, projection onto the net, exact sampling
//! from the (truncated) prior and finite windows around chosen atoms.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::seq::index::sample as sample_index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{arg, Error, Result};
use crate::posterior::{Atom, FinitePrior, SampledPrior};

/// Dropped prior mass allowed by the index cap.
pub const DROPPED_MASS: f64 = 1e-6;

/// Largest `|log σ|` for which an atom is materialized.
pub const MAX_LOG_SCALE: f64 = 600.0;

/// `log(π²/3 - 1)`, the per-coordinate normalizer of `(1 + |j|)^-2` over ℤ.
pub fn index_log_norm() -> f64 {
    (PI * PI / 3.0 - 1.0).ln()
}

/// `Σ_{m ≥ a} m^-2` for `a ≥ 1`.
pub fn inv_sq_tail(a: u64) -> f64 {
    assert!(a >= 1);
    const SWITCH: u64 = 20;
    let mut head = 0.0;
    let mut start = a;
    if a < SWITCH {
        for m in a..SWITCH {
            head += 1.0 / (m * m) as f64;
        }
        start = SWITCH;
    }
    // trigamma asymptotics
    let x = start as f64;
    let x2 = x * x;
    let tail = 1.0 / x + 1.0 / (2.0 * x2) + 1.0 / (6.0 * x2 * x) - 1.0 / (30.0 * x2 * x2 * x)
        + 1.0 / (42.0 * x2 * x2 * x2 * x)
        - 1.0 / (30.0 * x2 * x2 * x2 * x2 * x);
    head + tail
}

/// Prior mass of `{|j| > cap}` under `(1 + |j|)^-2 / (π²/3 - 1)`.
pub fn index_tail_mass(cap: u64) -> f64 {
    2.0 * inv_sq_tail(cap + 2) / (PI * PI / 3.0 - 1.0)
}

/// Base density class `M0` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum BaseClass {
    /// Nonincreasing densities on `[0, 1]` bounded by `b > 1`.
    Monotone { b: f64 },
    /// Densities supported on `[0, 1]`, bounded by `l0`, `alpha`-Hölder with constant `l1`.
    Holder { l0: f64, l1: f64, alpha: f64 },
}

impl BaseClass {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BaseClass::Monotone { b } if b > 1.0 && b.is_finite() => Ok(()),
            BaseClass::Monotone { .. } => arg("monotone class needs a bound B > 1"),
            BaseClass::Holder { l0, l1, alpha } if l0 >= 1.0 && l1 > 0.0 && alpha > 0.0 && alpha <= 1.0 => Ok(()),
            BaseClass::Holder { .. } => arg("Hölder class needs L0 >= 1, L1 > 0 and alpha in (0, 1]"),
        }
    }

    /// Parses `monotone(B)` or `holder(L0, L1, alpha)`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s
            .split_once('(')
            .ok_or_else(|| Error::Config(format!("bad class {s:?}")))?;
        let args: Vec<f64> = rest
            .trim_end_matches(')')
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("{v:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        let c = match (name.trim(), args.as_slice()) {
            ("monotone", [b]) => BaseClass::Monotone { b: *b },
            ("holder", [l0, l1, alpha]) => BaseClass::Holder {
                l0: *l0,
                l1: *l1,
                alpha: *alpha,
            },
            _ => return Err(Error::Config(format!("unknown class {s:?}"))),
        };
        c.validate()?;
        Ok(c)
    }

    /// Certified upper bound on `log |M0[η]|` for the histogram net.
    pub fn entropy(&self, eta: f64) -> f64 {
        match *self {
            BaseClass::Monotone { b } => (3.0 * b + 1.0) * 2f64.ln() * (1.0 / eta).max(1.0),
            BaseClass::Holder { l0, l1, alpha } => {
                (((l1 / eta).powf(1.0 / alpha) + 1.0) * (2.0 * l0 / eta + 1.0).ln()).max(1.0)
            }
        }
    }

    /// `(A, α)` of the shift/scale regularity bound on `ℝ^k`.
    pub fn regularity(&self, k: usize) -> (f64, f64) {
        match *self {
            BaseClass::Monotone { b } => (b, 1.0),
            BaseClass::Holder { l0, l1, alpha } => {
                (l1.max((1.0 + l1 * (k as f64).powf(alpha / 2.0) + l0) / 2.0), alpha)
            }
        }
    }

    /// Histogram net with TV covering radius `eta`.
    pub fn grid(&self, eta: f64) -> HistogramGrid {
        if eta >= 1.0 {
            return HistogramGrid {
                bins: 1,
                step: 1.0,
                levels: 1,
                monotone: true,
            };
        }
        let step = eta / 2.0;
        match *self {
            BaseClass::Monotone { b } => HistogramGrid {
                bins: (b / eta).ceil() as usize,
                step,
                levels: (b / step).floor() as u32 + 1,
                monotone: true,
            },
            BaseClass::Holder { l0, l1, alpha } => HistogramGrid {
                bins: (l1 / eta).powf(1.0 / alpha).ceil() as usize,
                step,
                levels: (l0 / step).floor() as u32 + 1,
                monotone: false,
            },
        }
    }
}

/// Equal-width histograms on `[0, 1]` with heights on `{0, h, 2h, ...}`,
/// renormalized by raising (or capping) at a common level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramGrid {
    pub bins: usize,
    pub step: f64,
    pub levels: u32,
    /// Restrict to nonincreasing level sequences.
    pub monotone: bool,
}

impl HistogramGrid {
    /// `log` of the number of level sequences.
    pub fn log_cardinality(&self) -> f64 {
        let n = self.bins as f64;
        let l = self.levels as f64;
        if self.monotone {
            // multisets of size N from L levels
            libm::lgamma(n + l) - libm::lgamma(n + 1.0) - libm::lgamma(l)
        } else {
            n * l.ln()
        }
    }

    fn check(&self, idx: &[u32]) -> Result<()> {
        if idx.len() != self.bins || idx.iter().any(|v| *v >= self.levels) {
            return arg("level sequence does not fit the grid");
        }
        if self.monotone && idx.windows(2).any(|w| w[1] > w[0]) {
            return arg("level sequence must be nonincreasing");
        }
        Ok(())
    }

    /// Heights of the net element with level sequence `idx`.
    pub fn heights(&self, idx: &[u32]) -> Result<Vec<f64>> {
        self.check(idx)?;
        let q: Vec<f64> = idx.iter().map(|v| *v as f64 * self.step).collect();
        Ok(fill_to_unit(&q))
    }

    pub fn element(&self, idx: &[u32]) -> Result<Density> {
        let n = self.bins;
        let edges: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        Density::histogram(edges, self.heights(idx)?)
    }

    /// Level sequence of the net element approximating `p`: bin averages
    /// rounded down to the level grid.
    pub fn project(&self, p: &Density) -> Vec<u32> {
        let n = self.bins as f64;
        let top = self.levels - 1;
        (0..self.bins)
            .map(|i| {
                let avg = p.mass1(i as f64 / n, (i + 1) as f64 / n) * n;
                ((avg / self.step + 1e-12).floor().max(0.0) as u32).min(top)
            })
            .collect()
    }

    /// Uniform draw from the level sequences.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<u32> {
        if self.monotone {
            // stars and bars: a uniform N-subset of N + L - 1 slots
            let slots = self.bins + self.levels as usize - 1;
            let mut pos = sample_index(rng, slots, self.bins).into_vec();
            pos.sort_unstable();
            let mut v: Vec<u32> = pos.iter().enumerate().map(|(i, s)| (s - i) as u32).collect();
            v.reverse();
            v
        } else {
            (0..self.bins).map(|_| rng.random_range(0..self.levels)).collect()
        }
    }
}

/// Raises the heights to `max(q, w)` or caps them at `min(q, w)` so that
/// their mean is one. Order and the upper bound `max(q) ∨ 1` are preserved.
pub fn fill_to_unit(q: &[f64]) -> Vec<f64> {
    let n = q.len() as f64;
    let mean = |f: &dyn Fn(f64) -> f64| q.iter().map(|v| f(*v)).sum::<f64>() / n;
    let s = mean(&|v| v);
    if (s - 1.0).abs() < 1e-15 {
        return q.to_vec();
    }
    let raise = s < 1.0;
    let (mut lo, mut hi) = if raise {
        (0.0, 1.0)
    } else {
        (0.0, q.iter().copied().fold(0.0, f64::max))
    };
    for _ in 0..200 {
        let w = 0.5 * (lo + hi);
        let m = if raise {
            mean(&|v| v.max(w))
        } else {
            mean(&|v| v.min(w))
        };
        if m < 1.0 {
            lo = w;
        } else {
            hi = w;
        }
    }
    let w = 0.5 * (lo + hi);
    q.iter().map(|v| if raise { v.max(w) } else { v.min(w) }).collect()
}

/// `η_n = inf{η > 0 : D̃(η) ≤ nη²/24}` by bisection.
pub fn eta_n(entropy: impl Fn(f64) -> f64, n: usize) -> Result<f64> {
    if n == 0 {
        return arg("n must be positive");
    }
    let n = n as f64;
    let excess = |eta: f64| entropy(eta) - n * eta * eta / 24.0;
    let mut hi = 1.0;
    while excess(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Precondition("entropy grows too fast for eta_n".into()));
        }
    }
    let mut lo = hi / 2.0;
    while excess(lo) <= 0.0 {
        lo /= 2.0;
        if lo < 1e-300 {
            return Ok(0.0);
        }
    }
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if excess(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Tuning parameters of the location-scale posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocScaleParams {
    pub n: usize,
    pub k: usize,
    pub big_k: f64,
    pub a: f64,
    pub alpha: f64,
    pub eta: f64,
    pub delta: f64,
    pub beta: f64,
    /// Bound on `|log σ| ∨ |m/σ|_∞` defining the covered sub-model.
    pub lambda: f64,
}

impl LocScaleParams {
    pub fn new(entropy: impl Fn(f64) -> f64, a: f64, alpha: f64, n: usize, k: usize, big_k: f64) -> Result<Self> {
        if !(big_k > 1.0) || k == 0 || !(a > 0.0) || !(alpha > 0.0 && alpha <= 1.0) {
            return arg("need K > 1, k >= 1, A > 0 and alpha in (0, 1]");
        }
        let eta = eta_n(entropy, n)?;
        let nf = n as f64;
        let kp = (k + 1) as f64;
        let delta = (eta / (2.0 * a)).powf(1.0 / alpha);
        let beta = 0.5 * (big_k * eta + 2.0 * (18.6 * kp / nf).sqrt());
        let lambda = ((big_k * big_k - 1.0) * nf * eta * eta / (48.0 * kp) + delta.ln_1p().ln()).exp();
        Ok(Self {
            n,
            k,
            big_k,
            a,
            alpha,
            eta,
            delta,
            beta,
            lambda,
        })
    }

    /// `λ = 4β/3`.
    pub fn inner_lambda(&self) -> f64 {
        4.0 * self.beta / 3.0
    }

    /// `approx + Kη + √((k+1)/n) + ξ/√n`, without the unspecified numerical factor.
    pub fn radius(&self, approx: f64, xi: f64) -> f64 {
        let n = self.n as f64;
        approx + self.big_k * self.eta + ((self.k + 1) as f64 / n).sqrt() + xi / n.sqrt()
    }

    /// Largest index `|j|` whose atoms stay inside the parameter box.
    pub fn box_cap(&self) -> f64 {
        let scale = self.lambda / self.delta.ln_1p();
        let loc = self.lambda / self.delta;
        scale.min(loc).floor()
    }
}

/// Smallest index cap whose dropped prior mass over `k + 1` coordinates is
/// below `dropped`.
pub fn mass_cap(k: usize, dropped: f64) -> u64 {
    let kept = |cap: u64| (1.0 - index_tail_mass(cap)).powi(k as i32 + 1);
    let ok = |cap: u64| 1.0 - kept(cap) < dropped;
    let mut hi = 1u64;
    while !ok(hi) {
        hi *= 2;
    }
    let mut lo = 0u64;
    if ok(lo) {
        return 0;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// One parameter `(net element, j0, j)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetIndex {
    pub element: Vec<u32>,
    pub j0: i64,
    pub j: Vec<i64>,
}

/// The lazily enumerated location-scale net with its prior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocScaleNet {
    pub class: BaseClass,
    pub params: LocScaleParams,
    pub grid: HistogramGrid,
    pub log_cardinality: f64,
    /// `|j_i| ≤ index_cap` for every retained atom.
    pub index_cap: u64,
    pub captured_mass: f64,
    /// `η_n ≥ 1`: the net collapses to the uniform density.
    pub degenerate: bool,
    /// The cap was lowered to keep atoms in the parameter box.
    pub box_limited: bool,
    /// Largest `|j0|` with `|log σ| ≤ MAX_LOG_SCALE`; atoms beyond it are
    /// indexed and weighted but not materialized.
    pub scale_cap: u64,
    /// Prior mass of the retained indices with `|j0| ≤ scale_cap`.
    pub representable_mass: f64,
}

impl LocScaleNet {
    /// Builds the net for `class` on `ℝ^k` (only `k = 1` is supported).
    pub fn build(class: BaseClass, n: usize, k: usize, big_k: f64) -> Result<Self> {
        class.validate()?;
        if k != 1 {
            return Err(Error::UnsupportedFamily(
                "histogram nets are built on [0, 1] only (k = 1)".into(),
            ));
        }
        let (a, alpha) = class.regularity(k);
        let params = LocScaleParams::new(|e| class.entropy(e), a, alpha, n, k, big_k)?;
        let grid = class.grid(params.eta);
        let want = mass_cap(k, DROPPED_MASS);
        let box_cap = params.box_cap();
        let (index_cap, box_limited) = if (want as f64) <= box_cap {
            (want, false)
        } else {
            (box_cap.max(0.0) as u64, true)
        };
        let captured_mass = (1.0 - index_tail_mass(index_cap)).powi(k as i32 + 1);
        let scale_cap = ((MAX_LOG_SCALE / params.delta.ln_1p()).floor() as u64).min(index_cap);
        let representable_mass =
            captured_mass * (1.0 - index_tail_mass(scale_cap)) / (1.0 - index_tail_mass(index_cap));
        Ok(Self {
            class,
            params,
            grid,
            log_cardinality: grid.log_cardinality(),
            index_cap,
            captured_mass,
            degenerate: params.eta >= 1.0,
            box_limited,
            scale_cap,
            representable_mass,
        })
    }

    /// `log π({P_θ}) = -L_θ`.
    pub fn log_weight(&self, idx: &NetIndex) -> f64 {
        let k = self.params.k as f64;
        let penalty: f64 = std::iter::once(idx.j0)
            .chain(idx.j.iter().copied())
            .map(|j| 2.0 * (1.0 + j.unsigned_abs() as f64).ln())
            .sum();
        -((k + 1.0) * index_log_norm() + self.log_cardinality + penalty)
    }

    /// `(m, σ) = ((1+δ)^j0 δ j, (1+δ)^j0)`.
    pub fn location_scale(&self, j0: i64, j: &[i64]) -> (Vec<f64>, f64) {
        let d = self.params.delta;
        let sigma = (j0 as f64 * d.ln_1p()).exp();
        (j.iter().map(|ji| sigma * d * *ji as f64).collect(), sigma)
    }

    /// Whether `|log σ| ∨ |m/σ|_∞ ≤ Λ_n` for the atom's parameters.
    pub fn in_box(&self, j0: i64, j: &[i64]) -> bool {
        let d = self.params.delta;
        let lam = self.params.lambda;
        // |log σ| = |j0| log(1+δ), |m/σ| = δ|j|
        j0.unsigned_abs() as f64 * d.ln_1p() <= lam && j.iter().all(|v| d * v.unsigned_abs() as f64 <= lam)
    }

    pub fn atom(&self, idx: &NetIndex) -> Result<Atom> {
        if idx.j.len() != self.params.k {
            return arg("location index has the wrong dimension");
        }
        if idx.j0.unsigned_abs() > self.scale_cap {
            return Err(Error::Overflow(format!("scale index {} is not representable", idx.j0)));
        }
        let (m, sigma) = self.location_scale(idx.j0, &idx.j);
        let base = self.grid.element(&idx.element)?;
        let mut tag = m.clone();
        tag.push(sigma);
        Ok(Atom::new(tag, Density::loc_scale(base, m, sigma)?))
    }

    /// Index of the atom approximating `σ^-1 p((· - m)/σ)`.
    pub fn nearest(&self, p: &Density, m: f64, sigma: f64) -> NetIndex {
        let d = self.params.delta;
        // σ̄/(1+δ) ≤ σ < σ̄, m̄ ≤ m < m̄ + σ̄δ
        let j0 = ((sigma.ln() / d.ln_1p()).floor() as i64) + 1;
        let (_, sbar) = self.location_scale(j0, &[]);
        let j = (m / (sbar * d)).floor() as i64;
        NetIndex {
            element: self.grid.project(p),
            j0,
            j: vec![j],
        }
    }

    /// Prior restricted to the given indices, renormalized.
    pub fn window(&self, indices: &[NetIndex]) -> Result<FinitePrior> {
        let atoms = indices.iter().map(|i| self.atom(i)).collect::<Result<Vec<_>>>()?;
        let lw = indices.iter().map(|i| self.log_weight(i)).collect();
        FinitePrior::from_log_weights(atoms, lw)
    }

    /// Indices around `centre` with `|Δj0|, |Δj| ≤ radius`, sharing its element.
    pub fn neighbourhood(&self, centre: &NetIndex, radius: i64) -> Vec<NetIndex> {
        let mut out = Vec::new();
        for d0 in -radius..=radius {
            for d1 in -radius..=radius {
                out.push(NetIndex {
                    element: centre.element.clone(),
                    j0: centre.j0 + d0,
                    j: vec![centre.j[0] + d1],
                });
            }
        }
        out
    }

    /// Exact draw from the prior truncated to `|j_i| ≤ index_cap`.
    pub fn sample_index(&self, rng: &mut impl Rng) -> NetIndex {
        let cap = self.index_cap;
        let mut coord = || -> i64 {
            let a = sample_abs_index(rng.random::<f64>(), cap) as i64;
            if a > 0 && rng.random::<bool>() {
                -a
            } else {
                a
            }
        };
        let j0 = coord();
        let j = (0..self.params.k).map(|_| coord()).collect();
        NetIndex {
            element: self.grid.sample(rng),
            j0,
            j,
        }
    }

    /// The truncated prior as a sampled prior (`ν = π`, so `log Π ≡ 0`),
    /// conditioned on `|j0| ≤ scale_cap`.
    pub fn sampled_prior(&self) -> SampledPrior {
        let net = Arc::new(self.clone());
        SampledPrior::new(
            move |rng: &mut ChaCha8Rng| loop {
                let idx = net.sample_index(rng);
                if idx.j0.unsigned_abs() <= net.scale_cap {
                    return net.atom(&idx).expect("sampled index lies on the grid");
                }
            },
            |_| 0.0,
        )
    }
}

/// Inverse CDF of `|j|` under `(1 + |j|)^-2` restricted to `|j| ≤ cap`.
fn sample_abs_index(u: f64, cap: u64) -> u64 {
    // unnormalized P(|j| ≤ a) = 1 + 2 Σ_{i=2}^{a+1} i^-2
    let head = |a: u64| 1.0 + 2.0 * (inv_sq_tail(2) - inv_sq_tail(a + 2));
    let target = u * head(cap);
    let (mut lo, mut hi) = (0u64, cap);
    if head(0) >= target {
        return 0;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if head(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
