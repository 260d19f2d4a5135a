//! Translation models `P_θ = p(· - θ)` with a scaled prior `ν_σ = σ⁻¹ q(·/σ)`.

use std::fmt;
use std::sync::Arc;

use crate::density::Density;
use crate::error::{Error, Result};
use crate::loss;
use crate::posterior::{Atom, FinitePrior};

/// Points of the log grid used for a numerical `Γ̄`.
pub const GAMMA_BAR_GRID: usize = 512;

type HFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Shape {
    /// `p(x) = e^{-|x|/b} / (2b)`.
    Laplace {
        b: f64,
    },
    /// `p(x) = α x^{α-1}` on `(0, 1]`.
    PowerLaw {
        alpha: f64,
    },
    Custom(HFn),
}

/// A translation family with its distance profile `H(t) = ‖P_t - P_0‖`.
#[derive(Clone)]
pub struct TranslationFamily {
    /// Member at `θ = 0`.
    pub base: Density,
    /// Standardized prior density `q`: positive, symmetric, decreasing on `ℝ₊`.
    pub prior_q: Density,
    pub sigma: f64,
    shape: Shape,
    /// Supremum of the domain of `H` (`+inf` when `H < 1` everywhere).
    pub l: f64,
    pub gamma_bar: f64,
    /// `true` when `Γ̄` comes from the log-grid sup rather than a closed form.
    pub gamma_bar_numeric: bool,
}

impl fmt::Debug for TranslationFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TranslationFamily")
            .field("base", &self.base)
            .field("prior_q", &self.prior_q)
            .field("sigma", &self.sigma)
            .field("l", &self.l)
            .field("gamma_bar", &self.gamma_bar)
            .finish()
    }
}

fn check_prior(q: &Density, sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Argument(format!("sigma must be positive, got {sigma}")));
    }
    let ok = matches!(
        q,
        Density::Gaussian { mu, .. } | Density::Laplace { mu, .. } | Density::Cauchy { mu, .. } if *mu == 0.0
    );
    if !ok {
        return Err(Error::UnsupportedFamily(
            "prior q must be a centered gaussian, laplace or cauchy density".into(),
        ));
    }
    Ok(())
}

/// Named standardized prior density.
pub fn prior_by_name(name: &str) -> Result<Density> {
    match name.trim() {
        "gaussian" => Density::gaussian(0.0, 1.0),
        "laplace" => Density::laplace(0.0, 1.0),
        "cauchy" => Density::cauchy(0.0, 1.0),
        other => Err(Error::Config(format!("unknown translation prior `{other}`"))),
    }
}

/// `max{q(0) sup_{0<r≤1/4} G(2r)/G(r), 1/(2 G(1/4))}` on a log grid over `[1e-6, 1/4]`.
///
/// Fails when the ratio is not finite or still climbing at the small end of
/// the grid, which signals an unbounded sup.
pub fn gamma_bar_numeric(g: impl Fn(f64) -> f64, q0: f64) -> Result<f64> {
    let (lo, hi) = (1e-6f64.ln(), 0.25f64.ln());
    let ratios: Vec<f64> = (0..GAMMA_BAR_GRID)
        .map(|i| {
            let r = (lo + (hi - lo) * i as f64 / (GAMMA_BAR_GRID - 1) as f64).exp();
            g(2.0 * r) / g(r)
        })
        .collect();
    if ratios.iter().any(|v| !v.is_finite()) {
        return Err(Error::UnsupportedFamily("G(2r)/G(r) is not finite".into()));
    }
    let sup = ratios.iter().copied().fold(0.0, f64::max);
    if ratios[0] == sup && ratios[0] > ratios[1] * 1.01 {
        return Err(Error::UnsupportedFamily("G(2r)/G(r) unbounded as r -> 0".into()));
    }
    Ok((q0 * sup).max(0.5 / g(0.25)))
}

impl TranslationFamily {
    /// Laplace base `e^{-|x|/b}/(2b)`: `H(t) = 1 - e^{-t/(2b)}`.
    pub fn laplace(b: f64, prior_q: Density, sigma: f64) -> Result<Self> {
        check_prior(&prior_q, sigma)?;
        let base = Density::laplace(0.0, b)?;
        let q0 = prior_q.pdf1(0.0);
        let gamma_bar = (q0 * 2f64.ln()).max(0.25 / b) / (4.0f64 / 3.0).ln();
        Ok(Self {
            base,
            prior_q,
            sigma,
            shape: Shape::Laplace { b },
            l: f64::INFINITY,
            gamma_bar,
            gamma_bar_numeric: false,
        })
    }

    /// Power-law base `α x^{α-1}` on `(0, 1]`: `H(t) = t^α ∧ 1`.
    pub fn power_law(alpha: f64, prior_q: Density, sigma: f64) -> Result<Self> {
        check_prior(&prior_q, sigma)?;
        let base = Density::power_law(alpha, 0.0)?;
        let q0 = prior_q.pdf1(0.0);
        let k = 2f64.powf(1.0 / alpha);
        Ok(Self {
            base,
            prior_q,
            sigma,
            shape: Shape::PowerLaw { alpha },
            l: 1.0,
            gamma_bar: k * q0.max(k / 2.0),
            gamma_bar_numeric: false,
        })
    }

    /// Any base density with a caller-supplied `H`; `G` and `Γ̄` are numeric.
    pub fn custom(
        base: Density,
        h: impl Fn(f64) -> f64 + Send + Sync + 'static,
        prior_q: Density,
        sigma: f64,
    ) -> Result<Self> {
        check_prior(&prior_q, sigma)?;
        if base.dim() != 1 {
            return Err(Error::UnsupportedFamily("translation models are 1-D".into()));
        }
        let h: HFn = Arc::new(h);
        if h(0.0).abs() > 1e-12 {
            return Err(Error::UnsupportedFamily("H(0) must be 0".into()));
        }
        let mut l = f64::INFINITY;
        let mut t = 1e-6;
        while t < 1e12 {
            if h(t) >= 1.0 - 1e-12 {
                let (mut a, mut b) = (t / 2.0, t);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if h(m) >= 1.0 - 1e-12 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                l = b;
                break;
            }
            t *= 2.0;
        }
        let top = if l.is_finite() { l } else { 1e6 };
        let mut prev = 0.0;
        for i in 1..=GAMMA_BAR_GRID {
            let v = h(top * i as f64 / GAMMA_BAR_GRID as f64);
            if v < prev - 1e-12 || (v <= prev && v < 1.0 - 1e-12) {
                return Err(Error::UnsupportedFamily("H is not increasing".into()));
            }
            prev = v;
        }
        let mut fam = Self {
            base,
            prior_q,
            sigma,
            shape: Shape::Custom(h),
            l,
            gamma_bar: f64::NAN,
            gamma_bar_numeric: true,
        };
        let q0 = fam.prior_q.pdf1(0.0);
        fam.gamma_bar = gamma_bar_numeric(|r| fam.g(r), q0)?;
        Ok(fam)
    }

    /// `H` measured by quadrature of the TV distance.
    pub fn numeric_h(base: Density) -> impl Fn(f64) -> f64 + Send + Sync + 'static {
        move |t: f64| {
            if t == 0.0 {
                return 0.0;
            }
            loss::tv_distance(&base, &base.shifted(t.abs())).unwrap_or(f64::NAN)
        }
    }

    /// `p` is `laplace`, `laplace(b)` or `power_law(α)`; `q` is `gaussian`, `laplace` or `cauchy`.
    pub fn by_name(p: &str, q: &str, sigma: f64) -> Result<Self> {
        let prior_q = prior_by_name(q)?;
        let d = Density::parse(p)?;
        match d {
            Density::Laplace { b, .. } => Self::laplace(b, prior_q, sigma),
            Density::PowerLaw { alpha, .. } => Self::power_law(alpha, prior_q, sigma),
            _ => Err(Error::Config(format!(
                "translation base `{p}` has no built-in H; use TranslationFamily::custom"
            ))),
        }
    }

    /// `‖P_t - P_0‖`.
    pub fn h(&self, t: f64) -> f64 {
        let t = t.abs();
        match &self.shape {
            Shape::Laplace { b } => -(-t / (2.0 * b)).exp_m1(),
            Shape::PowerLaw { alpha } => t.powf(*alpha).min(1.0),
            Shape::Custom(h) => h(t),
        }
    }

    /// Inverse of `H` on `[0, 1)`.
    pub fn g(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if r >= 1.0 {
            return self.l;
        }
        match &self.shape {
            Shape::Laplace { b } => -2.0 * b * (-r).ln_1p(),
            Shape::PowerLaw { alpha } => r.powf(1.0 / alpha),
            Shape::Custom(h) => {
                let mut hi = if self.l.is_finite() { self.l } else { 1.0 };
                while !self.l.is_finite() && h(hi) < r {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let m = 0.5 * (lo + hi);
                    if !(m > lo && m < hi) {
                        break;
                    }
                    if h(m) < r {
                        lo = m;
                    } else {
                        hi = m;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// The `(1 - α)` quantile of `q`, i.e. `ν_1((-∞, t]) = 1 - α`.
    pub fn q_quantile(&self, u: f64) -> f64 {
        self.prior_q.quantile1(u)
    }

    /// Third quartile `t0` of `ν_1`.
    pub fn t0(&self) -> f64 {
        self.q_quantile(0.75)
    }

    pub fn member(&self, theta: f64) -> Density {
        self.base.shifted(theta)
    }

    pub fn atom(&self, theta: f64) -> Atom {
        Atom::new(vec![theta], self.member(theta))
    }

    /// Distribution function of `ν_σ`.
    pub fn prior_cdf(&self, theta: f64) -> f64 {
        self.prior_q.cdf1(theta / self.sigma)
    }

    pub fn prior_pdf(&self, theta: f64) -> f64 {
        self.prior_q.pdf1(theta / self.sigma) / self.sigma
    }

    pub fn sample_theta(&self, rng: &mut impl rand::Rng) -> f64 {
        self.sigma * self.prior_q.sample1(rng)
    }

    /// `ν_σ{θ : H(|θ - θ̄|) ≤ r}`.
    pub fn ball_mass(&self, theta_bar: f64, r: f64) -> f64 {
        if r >= 1.0 {
            return 1.0;
        }
        if r < 0.0 {
            return 0.0;
        }
        let g = self.g(r);
        if !g.is_finite() {
            return 1.0;
        }
        (self.prior_cdf(theta_bar + g) - self.prior_cdf(theta_bar - g)).clamp(0.0, 1.0)
    }

    /// Finite prior on sorted `thetas`, each weighted by the `ν_σ` mass of its
    /// Voronoi cell (end cells extend to `±∞`).
    pub fn discretize(&self, thetas: &[f64]) -> Result<FinitePrior> {
        voronoi_prior(thetas, |t| self.prior_cdf(t), |t| self.prior_pdf(t), |t| self.atom(t))
    }

    /// Matrix of `H(|θ_a - θ_b|)`, row-major.
    pub fn distance_matrix(&self, thetas: &[f64]) -> Vec<f64> {
        let m = thetas.len();
        let mut d = vec![0.0; m * m];
        for a in 0..m {
            for b in a + 1..m {
                let v = self.h(thetas[a] - thetas[b]);
                d[a * m + b] = v;
                d[b * m + a] = v;
            }
        }
        d
    }
}

/// Finite prior on sorted `thetas` weighted by the mass of each Voronoi cell
/// under the distribution with the given `cdf` (end cells extend to `±∞`).
pub fn voronoi_prior(
    thetas: &[f64],
    cdf: impl Fn(f64) -> f64,
    pdf: impl Fn(f64) -> f64,
    atom: impl Fn(f64) -> Atom,
) -> Result<FinitePrior> {
    if thetas.is_empty() || thetas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Argument("thetas must be nonempty and increasing".into()));
    }
    let m = thetas.len();
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        let lo = if i == 0 {
            f64::NEG_INFINITY
        } else {
            0.5 * (thetas[i - 1] + thetas[i])
        };
        let hi = if i + 1 == m {
            f64::INFINITY
        } else {
            0.5 * (thetas[i] + thetas[i + 1])
        };
        let w = cdf(hi) - cdf(lo);
        // far-tail cells lose all precision in the difference
        let w = if w > 0.0 {
            w
        } else {
            pdf(thetas[i]) * (hi - lo).min(1.0)
        };
        weights.push(w.max(f64::MIN_POSITIVE));
    }
    let atoms = thetas.iter().map(|t| atom(*t)).collect();
    FinitePrior::new(atoms, &weights)
}
