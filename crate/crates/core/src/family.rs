//! Families of pairwise test statistics `t_(P,Q)` with their constants.

use std::fmt;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use lru::LruCache;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::{common_points, points_within, sort_dedup, Density};
use crate::error::{arg, Error, Result};
use crate::loss::{self, LossSpec, Side};
use crate::quad::{self, QuadOptions};

/// Default number of cached pair constants.
pub const PAIR_CACHE_CAPACITY: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum FamilyKind {
    Tv,
    Hellinger,
    Lj { j: f64, r: f64 },
    Kl { a: f64 },
}

/// Per-pair constants; their meaning depends on the family.
///
/// For total variation `(u, v) = (Q(q > p), P(p > q))`; for L_j
/// `(u, v) = (‖p - q‖_j, ∫ f d(P + Q)/2)`. Other families ignore them.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairConsts {
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum PairKey {
    Shift(u64, u64),
    Plain(u64, u64),
}

type Cache = Mutex<LruCache<PairKey, PairConsts>>;

/// A test family together with its constants `a0 ≥ a1 > 0`, optional `a2`, and `τ`.
///
/// Clones share the pair cache.
#[derive(Clone)]
pub struct TestFamily {
    pub kind: FamilyKind,
    pub a0: f64,
    pub a1: f64,
    pub a2: Option<f64>,
    pub tau: f64,
    cache: Arc<Cache>,
}

impl fmt::Debug for TestFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFamily")
            .field("kind", &self.kind)
            .field("a0", &self.a0)
            .field("a1", &self.a1)
            .field("a2", &self.a2)
            .field("tau", &self.tau)
            .finish()
    }
}

impl TestFamily {
    fn build(kind: FamilyKind, a0: f64, a1: f64, a2: Option<f64>, tau: f64) -> Self {
        let cap = NonZeroUsize::new(PAIR_CACHE_CAPACITY).expect("nonzero capacity");
        Self {
            kind,
            a0,
            a1,
            a2,
            tau,
            cache: Arc::new(Mutex::new(LruCache::new(cap))),
        }
    }

    /// Total variation family: `a0 = 3/2`, `a1 = 1/2`, `τ = 1`.
    pub fn tv() -> Self {
        Self::build(FamilyKind::Tv, 1.5, 0.5, None, 1.0)
    }

    /// Squared Hellinger family: `a0 = 2`, `a1 = 3/16`, `a2 = 3√2/4`, `τ = 2`.
    pub fn hellinger() -> Self {
        Self::build(FamilyKind::Hellinger, 2.0, 3.0 / 16.0, Some(0.75 * 2f64.sqrt()), 2.0)
    }

    /// L_j family for a model class with `‖p - q‖_∞ ≤ R ‖p - q‖_j`.
    pub fn lj(j: f64, r: f64) -> Result<Self> {
        if !(j > 1.0 && j.is_finite() && r > 0.0) {
            return arg("L_j family needs 1 < j < inf and R > 0");
        }
        let s = r.powf(j - 1.0);
        Ok(Self::build(FamilyKind::Lj { j, r }, 0.75 / s, 0.25 / s, None, 1.0))
    }

    /// Log-likelihood-ratio family for models with `e^-a ≤ dP/dQ ≤ e^a`.
    pub fn kl(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return arg("KL family needs a > 0");
        }
        let h = 0.5 / a;
        Ok(Self::build(
            FamilyKind::Kl { a },
            h,
            h,
            Some(2.0 * a / (0.5 * a).tanh()),
            1.0,
        ))
    }

    /// Overrides the variance constant for models where it is known to hold.
    pub fn with_a2(mut self, a2: f64) -> Self {
        self.a2 = Some(a2);
        self
    }

    /// Selects a family by CLI name: `tv`, `hellinger`, `lj` (needs `j`, `R`), `kl` (needs `a`).
    pub fn by_name(name: &str, params: &[f64]) -> Result<Self> {
        match name {
            "tv" => Ok(Self::tv()),
            "hellinger" => Ok(Self::hellinger()),
            "lj" if params.len() == 2 => Self::lj(params[0], params[1]),
            "kl" if params.len() == 1 => Self::kl(params[0]),
            "lj" | "kl" => Err(Error::Config(format!("family `{name}` needs parameters"))),
            other => Err(Error::Config(format!("unknown family `{other}`"))),
        }
    }

    /// Name used in reports.
    pub fn name(&self) -> &'static str {
        match self.kind {
            FamilyKind::Tv => "tv",
            FamilyKind::Hellinger => "hellinger",
            FamilyKind::Lj { .. } => "lj",
            FamilyKind::Kl { .. } => "kl",
        }
    }

    /// The loss the family is calibrated for; `None` for the KL family.
    pub fn loss_spec(&self) -> Option<LossSpec> {
        match self.kind {
            FamilyKind::Tv => Some(LossSpec::tv()),
            FamilyKind::Hellinger => Some(LossSpec::hellinger_sq()),
            FamilyKind::Lj { j, r } => Some(LossSpec::lj(j, r)),
            FamilyKind::Kl { .. } => None,
        }
    }

    /// `ℓ(P, Q)` for the family's loss (the KL divergence for the KL family).
    pub fn loss(&self, p: &Density, q: &Density) -> Result<f64> {
        match self.loss_spec() {
            Some(spec) => spec.eval(p, q),
            None => loss::kl_divergence(p, q),
        }
    }

    fn needs_pair(&self) -> bool {
        matches!(self.kind, FamilyKind::Tv | FamilyKind::Lj { .. })
    }

    /// Pair constants for `(P, Q)`, memoized in an LRU cache.
    pub fn pair(&self, p: &Density, q: &Density) -> Result<PairConsts> {
        if !self.needs_pair() {
            return Ok(PairConsts::default());
        }
        let (key, swapped) = match (p.split_shift(), q.split_shift()) {
            (Some((bp, sp)), Some((bq, sq))) if bp == bq => {
                let d = sq - sp;
                if d == 0.0 {
                    return Ok(PairConsts::default());
                }
                (PairKey::Shift(bp, d.abs().to_bits()), d < 0.0)
            }
            _ => {
                let (kp, kq) = (p.key(), q.key());
                if kp == kq {
                    return Ok(PairConsts::default());
                }
                (PairKey::Plain(kp.min(kq), kp.max(kq)), kp > kq)
            }
        };
        let hit = self.cache.lock().expect("pair cache poisoned").get(&key).copied();
        let canon = match hit {
            Some(c) => c,
            None => {
                let c = if swapped {
                    self.compute_pair(q, p)?
                } else {
                    self.compute_pair(p, q)?
                };
                self.cache.lock().expect("pair cache poisoned").put(key, c);
                c
            }
        };
        Ok(if swapped { self.swap(canon) } else { canon })
    }

    fn swap(&self, c: PairConsts) -> PairConsts {
        match self.kind {
            FamilyKind::Tv => PairConsts { u: c.v, v: c.u },
            FamilyKind::Lj { .. } => PairConsts { u: c.u, v: -c.v },
            _ => c,
        }
    }

    fn compute_pair(&self, p: &Density, q: &Density) -> Result<PairConsts> {
        if p.dim() != 1 || q.dim() != 1 {
            return arg("pair constants are implemented for 1-D models");
        }
        match self.kind {
            FamilyKind::Tv => {
                let (q_gt, p_gt, _) = loss::comparison_masses(p, q);
                Ok(PairConsts { u: q_gt, v: p_gt })
            }
            FamilyKind::Lj { j, .. } => {
                let norm = loss::lj_loss(p, q, j)?;
                if norm == 0.0 {
                    return Ok(PairConsts::default());
                }
                let scale = norm.powf(j - 1.0);
                let pts = common_points(&[p, q]);
                let r = quad::integrate_pieces(
                    |x| {
                        let (pv, qv) = (p.pdf1(x), q.pdf1(x));
                        let d = pv - qv;
                        d.signum() * d.abs().powf(j - 1.0) / scale * 0.5 * (pv + qv)
                    },
                    &pts,
                    QuadOptions::default(),
                )?;
                Ok(PairConsts { u: norm, v: r.value })
            }
            _ => Ok(PairConsts::default()),
        }
    }

    /// Statistic from the log-densities of `P` and `Q` at a point.
    #[inline]
    pub fn stat_from_logs(&self, lp: f64, lq: f64, pair: &PairConsts) -> Result<f64> {
        match self.kind {
            FamilyKind::Tv => {
                let iq = if lq > lp { 1.0 } else { 0.0 };
                let ip = if lp > lq { 1.0 } else { 0.0 };
                Ok(0.5 * (iq - pair.u) - 0.5 * (ip - pair.v))
            }
            FamilyKind::Hellinger => {
                if lp == f64::NEG_INFINITY && lq == f64::NEG_INFINITY {
                    return Ok(0.0);
                }
                Ok(0.5 * (0.25 * (lq - lp)).tanh())
            }
            FamilyKind::Lj { j, r } => {
                if pair.u == 0.0 {
                    return Ok(0.0);
                }
                let d = lp.exp() - lq.exp();
                let f = d.signum() * (d.abs() / pair.u).powf(j - 1.0);
                let f = if d == 0.0 { 0.0 } else { f };
                Ok((pair.v - f) / (2.0 * r.powf(j - 1.0)))
            }
            FamilyKind::Kl { a } => {
                if lp == f64::NEG_INFINITY && lq == f64::NEG_INFINITY {
                    return Ok(0.0);
                }
                let d = lq - lp;
                if !(d.abs() <= a * (1.0 + 1e-12)) {
                    return Err(Error::BoundViolation { ratio: d.exp(), a });
                }
                Ok(d / (2.0 * a))
            }
        }
    }

    /// `t_(P,Q)(x)`.
    pub fn stat(&self, p: &Density, q: &Density, x: &[f64]) -> Result<f64> {
        let pair = self.pair(p, q)?;
        self.stat_from_logs(p.ln_pdf(x), q.ln_pdf(x), &pair)
    }

    /// Number of cached pairs.
    pub fn cached_pairs(&self) -> usize {
        self.cache.lock().expect("pair cache poisoned").len()
    }

    /// `(E_S t, E_S t²)` for a 1-D model by exact partition (TV) or quadrature.
    pub fn moments_under(&self, s: &Density, p: &Density, q: &Density) -> Result<(f64, f64)> {
        let pair = self.pair(p, q)?;
        if let FamilyKind::Tv = self.kind {
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            for piece in loss::sign_partition_over(p, q, &[s]) {
                let (lp, lq) = match piece.side {
                    Side::Q => (0.0, 1.0),
                    Side::P => (1.0, 0.0),
                    Side::Tie => (0.0, 0.0),
                };
                let t = self.stat_from_logs(lp, lq, &pair)?;
                let w = s.mass1(piece.a, piece.b);
                m1 += w * t;
                m2 += w * t * t;
            }
            return Ok((m1, m2));
        }
        let mut pts = points_within(s, &[p, q]);
        if let FamilyKind::Lj { .. } = self.kind {
            let (a, b) = (pts[0], pts[pts.len() - 1]);
            pts.extend(
                loss::sign_partition(p, q)
                    .iter()
                    .flat_map(|pc| [pc.a, pc.b])
                    .filter(|x| *x > a && *x < b),
            );
            sort_dedup(&mut pts);
        }
        let mut err = None;
        let mut eval = |x: f64, power: i32| -> f64 {
            let ls = s.ln_pdf1(x);
            if ls == f64::NEG_INFINITY {
                return 0.0;
            }
            match self.stat_from_logs(p.ln_pdf1(x), q.ln_pdf1(x), &pair) {
                Ok(t) => ls.exp() * t.powi(power),
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            }
        };
        let m1 = quad::integrate_pieces(|x| eval(x, 1), &pts, QuadOptions::default())?.value;
        let m2 = quad::integrate_pieces(|x| eval(x, 2), &pts, QuadOptions::default())?.value;
        if let Some(e) = err {
            return Err(e);
        }
        Ok((m1, m2))
    }
}

/// Outcome of checking the moment and variance inequalities on one triple.
#[derive(Debug, Clone, Serialize)]
pub struct TripleCheck {
    pub s: usize,
    pub pair: usize,
    pub mean: f64,
    pub variance: f64,
    pub loss_sp: f64,
    pub loss_sq: f64,
    /// `a0 ℓ(S,P) - a1 ℓ(S,Q) - E_S t`
    pub moment_slack: f64,
    /// `a2 [ℓ(S,P) + ℓ(S,Q)] - Var_S t`, when `a2` is set.
    pub variance_slack: Option<f64>,
    /// Standard error of the Monte-Carlo estimates; zero under quadrature.
    pub std_error: f64,
    pub ok: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub family: FamilyKind,
    pub tolerance: f64,
    pub checks: Vec<TripleCheck>,
    pub violations: usize,
}

/// Checks `E_S t ≤ a0 ℓ(S,P) - a1 ℓ(S,Q)` and `Var_S t ≤ a2 [ℓ(S,P) + ℓ(S,Q)]`
/// on every `(S, P, Q)` with `S` from `s_grid`.
///
/// 1-D models use quadrature; others fall back on `sample_budget` draws from
/// `S`, and a slack only counts as violated when it is below `-tol` by more
/// than three standard errors. Failures are recorded per triple.
pub fn verify_assumption_moments(
    family: &TestFamily,
    s_grid: &[Density],
    pairs: &[(Density, Density)],
    sample_budget: usize,
    tol: f64,
) -> MomentReport {
    let mut checks = Vec::new();
    for (si, s) in s_grid.iter().enumerate() {
        for (pi, (p, q)) in pairs.iter().enumerate() {
            checks.push(check_triple(family, s, p, q, si, pi, sample_budget, tol));
        }
    }
    let violations = checks.iter().filter(|c| !c.ok).count();
    MomentReport {
        family: family.kind,
        tolerance: tol,
        checks,
        violations,
    }
}

#[allow(clippy::too_many_arguments)]
fn check_triple(
    family: &TestFamily,
    s: &Density,
    p: &Density,
    q: &Density,
    si: usize,
    pi: usize,
    sample_budget: usize,
    tol: f64,
) -> TripleCheck {
    let run = || -> Result<(f64, f64, f64, f64, f64)> {
        let loss_sp = family.loss(s, p)?;
        let loss_sq = family.loss(s, q)?;
        if s.dim() == 1 && p.dim() == 1 {
            let (m1, m2) = family.moments_under(s, p, q)?;
            return Ok((m1, (m2 - m1 * m1).max(0.0), loss_sp, loss_sq, 0.0));
        }
        let pair = family.pair(p, q)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ (si as u64) << 20 ^ pi as u64);
        let n = sample_budget.max(2);
        let mut ts = Vec::with_capacity(n);
        for _ in 0..n {
            let x = s.sample(&mut rng);
            ts.push(family.stat_from_logs(p.ln_pdf(&x), q.ln_pdf(&x), &pair)?);
        }
        let m1 = ts.iter().sum::<f64>() / n as f64;
        let var = ts.iter().map(|t| (t - m1) * (t - m1)).sum::<f64>() / (n - 1) as f64;
        Ok((m1, var, loss_sp, loss_sq, (var / n as f64).sqrt()))
    };
    match run() {
        Ok((mean, variance, loss_sp, loss_sq, se)) => {
            let moment_slack = family.a0 * loss_sp - family.a1 * loss_sq - mean;
            let variance_slack = family.a2.map(|a2| a2 * (loss_sp + loss_sq) - variance);
            let allow = tol + 3.0 * se;
            let ok = moment_slack >= -allow && variance_slack.is_none_or(|v| v >= -allow);
            TripleCheck {
                s: si,
                pair: pi,
                mean,
                variance,
                loss_sp,
                loss_sq,
                moment_slack,
                variance_slack,
                std_error: se,
                ok,
                error: None,
            }
        }
        Err(e) => TripleCheck {
            s: si,
            pair: pi,
            mean: f64::NAN,
            variance: f64::NAN,
            loss_sp: f64::NAN,
            loss_sq: f64::NAN,
            moment_slack: f64::NAN,
            variance_slack: None,
            std_error: 0.0,
            ok: false,
            error: Some(e.to_string()),
        },
    }
}

/// `sup t - inf t` over the given points.
pub fn empirical_range(family: &TestFamily, p: &Density, q: &Density, xs: &[Vec<f64>]) -> Result<f64> {
    let pair = family.pair(p, q)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for x in xs {
        let t = family.stat_from_logs(p.ln_pdf(x), q.ln_pdf(x), &pair)?;
        lo = lo.min(t);
        hi = hi.max(t);
    }
    Ok(if xs.is_empty() { 0.0 } else { hi - lo })
}

/// Diagnostic estimate of the constant `R` in `‖p - q‖_∞ ≤ R ‖p - q‖_j`
/// over the given pairs, taking the sup norm on a fine grid.
pub fn estimate_lj_constant(pairs: &[(Density, Density)], j: f64) -> Result<f64> {
    let mut best: f64 = 0.0;
    for (p, q) in pairs {
        let norm = loss::lj_loss(p, q, j)?;
        if norm == 0.0 {
            continue;
        }
        let pts = common_points(&[p, q]);
        let (a, b) = (pts[0], pts[pts.len() - 1]);
        let grid = 4096;
        let sup = (0..=grid)
            .map(|i| {
                let x = a + (b - a) * i as f64 / grid as f64;
                (p.pdf1(x) - q.pdf1(x)).abs()
            })
            .fold(0.0, f64::max);
        best = best.max(sup / norm);
    }
    Ok(best)
}
