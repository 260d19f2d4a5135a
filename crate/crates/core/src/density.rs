//! Probability densities on the line and on boxes of ℝ^k.
//!
//! Every built-in 1-D density carries a closed-form distribution function,
//! its support, and the points where it is not smooth, so that integrals
//! and set masses can be computed without silent quadrature error.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{arg, Error, Result};
use crate::quad::{self, QuadOptions};

/// Tail mass left outside the truncated integration range of unbounded supports.
pub const TAIL_MASS: f64 = 1e-12;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// A user-supplied 1-D density with bounded support.
pub struct CustomDensity {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub breakpoints: Vec<f64>,
    pdf: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    id: u64,
}

impl CustomDensity {
    pub fn new(
        name: impl Into<String>,
        lo: f64,
        hi: f64,
        breakpoints: Vec<f64>,
        pdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        static NEXT: AtomicU64 = AtomicU64::new(1);
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return arg("custom density needs a bounded support lo < hi");
        }
        Ok(Self {
            name: name.into(),
            lo,
            hi,
            breakpoints,
            pdf: Box::new(pdf),
            id: NEXT.fetch_add(1, Ordering::Relaxed),
        })
    }
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Custom({}, [{}, {}])", self.name, self.lo, self.hi)
    }
}

/// Finite mixture of densities of a common dimension.
#[derive(Debug, Clone)]
pub struct MixtureMeasure {
    pub components: Vec<Density>,
    pub weights: Vec<f64>,
}

impl MixtureMeasure {
    pub fn new(components: Vec<Density>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() || components.len() != weights.len() {
            return arg("mixture needs one weight per component");
        }
        let dim = components[0].dim();
        if components.iter().any(|c| c.dim() != dim) {
            return arg("mixture components differ in dimension");
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return arg("mixture weights must be nonnegative");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return arg(format!("mixture weights sum to {total}, not 1"));
        }
        Ok(Self { components, weights })
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.components
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * c.pdf(x))
            .sum()
    }
}

/// A probability density.
///
/// Values are cheap to clone; heavy payloads sit behind `Arc`.
#[derive(Debug, Clone)]
pub enum Density {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Gaussian {
        mu: f64,
        sigma: f64,
    },
    Laplace {
        mu: f64,
        b: f64,
    },
    Cauchy {
        mu: f64,
        s: f64,
    },
    /// `alpha (x - shift)^(alpha - 1)` on `(shift, shift + 1]`.
    PowerLaw {
        alpha: f64,
        shift: f64,
    },
    /// Piecewise constant on `edges`; heights integrate to one.
    Histogram {
        edges: Arc<[f64]>,
        heights: Arc<[f64]>,
    },
    /// `1 + a cos(2π f x) + b sin(2π f x)` on `[0, 1]`.
    Trig {
        a: f64,
        b: f64,
        freq: u32,
    },
    /// Symmetric Hölder bump `∝ min(u, 2h - u)^alpha` on `[center - h, center + h]`.
    Bump {
        center: f64,
        half_width: f64,
        alpha: f64,
    },
    /// Gaussian with its log-density floored `depth` below the mode, restricted to `[lo, hi]`.
    Floored {
        mu: f64,
        sigma: f64,
        depth: f64,
        lo: f64,
        hi: f64,
        log_norm: f64,
    },
    /// `sigma^-k base((x - m) / sigma)`.
    LocScale {
        base: Arc<Density>,
        m: Arc<[f64]>,
        sigma: f64,
    },
    Mixture(Arc<MixtureMeasure>),
    /// Isotropic Gaussian on ℝ^k.
    IsoGaussian {
        mean: Arc<[f64]>,
        sigma: f64,
    },
    /// Product of 1-D densities.
    Product(Arc<[Density]>),
    Custom(Arc<CustomDensity>),
}

impl Density {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return arg("uniform needs finite lo < hi");
        }
        Ok(Density::Uniform { lo, hi })
    }

    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        check_loc_scale(mu, sigma)?;
        Ok(Density::Gaussian { mu, sigma })
    }

    pub fn laplace(mu: f64, b: f64) -> Result<Self> {
        check_loc_scale(mu, b)?;
        Ok(Density::Laplace { mu, b })
    }

    pub fn cauchy(mu: f64, s: f64) -> Result<Self> {
        check_loc_scale(mu, s)?;
        Ok(Density::Cauchy { mu, s })
    }

    pub fn power_law(alpha: f64, shift: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0 && shift.is_finite()) {
            return arg("power law needs alpha in (0, 1] and a finite shift");
        }
        Ok(Density::PowerLaw { alpha, shift })
    }

    /// Histogram with the given edges; heights are rescaled to integrate to one.
    pub fn histogram(edges: Vec<f64>, heights: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || heights.len() + 1 != edges.len() {
            return arg("histogram needs m + 1 edges for m heights");
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) || edges.iter().any(|e| !e.is_finite()) {
            return arg("histogram edges must be finite and increasing");
        }
        if heights.iter().any(|h| !(*h >= 0.0) || !h.is_finite()) {
            return arg("histogram heights must be finite and nonnegative");
        }
        let mass: f64 = heights
            .iter()
            .zip(edges.windows(2))
            .map(|(h, w)| h * (w[1] - w[0]))
            .sum();
        if !(mass > 0.0) {
            return arg("histogram has zero mass");
        }
        let heights: Vec<f64> = heights.iter().map(|h| h / mass).collect();
        Ok(Density::Histogram {
            edges: edges.into(),
            heights: heights.into(),
        })
    }

    pub fn trig(a: f64, b: f64, freq: u32) -> Result<Self> {
        if !(a.hypot(b) <= 1.0) || freq == 0 {
            return arg("trig density needs sqrt(a^2 + b^2) <= 1 and freq >= 1");
        }
        Ok(Density::Trig { a, b, freq })
    }

    pub fn bump(center: f64, half_width: f64, alpha: f64) -> Result<Self> {
        if !(half_width > 0.0 && alpha > 0.0 && alpha <= 1.0 && center.is_finite()) {
            return arg("bump needs half_width > 0 and alpha in (0, 1]");
        }
        Ok(Density::Bump {
            center,
            half_width,
            alpha,
        })
    }

    pub fn floored(mu: f64, sigma: f64, depth: f64, lo: f64, hi: f64) -> Result<Self> {
        check_loc_scale(mu, sigma)?;
        if !(depth > 0.0 && lo < hi && lo.is_finite() && hi.is_finite()) {
            return arg("floored gaussian needs depth > 0 and finite lo < hi");
        }
        let w = sigma * (2.0 * depth).sqrt();
        let (a, b) = ((mu - w).max(lo), (mu + w).min(hi));
        let core = if a < b {
            // Mass of the Gaussian part relative to the mode value phi(0)/sigma.
            (std_normal_cdf((b - mu) / sigma) - std_normal_cdf((a - mu) / sigma)) * sigma * (2.0 * PI).sqrt()
        } else {
            0.0
        };
        let floor_len = (hi - lo) - (b - a).max(0.0);
        let rel = core + floor_len * (-depth).exp();
        if !(rel > 0.0) {
            return arg("floored gaussian has no mass on its support");
        }
        Ok(Density::Floored {
            mu,
            sigma,
            depth,
            lo,
            hi,
            log_norm: rel.ln(),
        })
    }

    pub fn loc_scale(base: Density, m: Vec<f64>, sigma: f64) -> Result<Self> {
        if m.len() != base.dim() || !(sigma > 0.0) || m.iter().any(|v| !v.is_finite()) {
            return arg("location-scale needs a location of the base dimension and sigma > 0");
        }
        Ok(Density::LocScale {
            base: Arc::new(base),
            m: m.into(),
            sigma,
        })
    }

    pub fn iso_gaussian(mean: Vec<f64>, sigma: f64) -> Result<Self> {
        if mean.is_empty() || !(sigma > 0.0) {
            return arg("isotropic gaussian needs k >= 1 and sigma > 0");
        }
        Ok(Density::IsoGaussian {
            mean: mean.into(),
            sigma,
        })
    }

    pub fn product(factors: Vec<Density>) -> Result<Self> {
        if factors.is_empty() || factors.iter().any(|f| f.dim() != 1) {
            return arg("product needs 1-D factors");
        }
        Ok(Density::Product(factors.into()))
    }

    pub fn mixture(m: MixtureMeasure) -> Self {
        Density::Mixture(Arc::new(m))
    }

    pub fn custom(c: CustomDensity) -> Self {
        Density::Custom(Arc::new(c))
    }

    /// Parses a registry expression such as `gaussian(0, 1)` or `power_law(0.5)`.
    pub fn parse(spec: &str) -> Result<Self> {
        let s = spec.trim();
        let (name, args) = match s.find('(') {
            Some(i) if s.ends_with(')') => (&s[..i], &s[i + 1..s.len() - 1]),
            None => (s, ""),
            _ => return Err(Error::Config(format!("malformed density `{spec}`"))),
        };
        let nums: Vec<f64> = if args.trim().is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad number `{t}` in `{spec}`")))
                })
                .collect::<Result<_>>()?
        };
        let get = |i: usize, default: f64| nums.get(i).copied().unwrap_or(default);
        match name.trim() {
            "uniform" => Density::uniform(get(0, 0.0), get(1, 1.0)),
            "gaussian" => Density::gaussian(get(0, 0.0), get(1, 1.0)),
            "laplace" => Density::laplace(get(0, 0.0), get(1, 1.0)),
            "cauchy" => Density::cauchy(get(0, 0.0), get(1, 1.0)),
            "power_law" => Density::power_law(get(0, 0.5), get(1, 0.0)),
            "bump" => Density::bump(get(0, 0.5), get(1, 0.5), get(2, 1.0)),
            "floored" => Density::floored(get(0, 0.0), get(1, 1.0), get(2, 8.0), get(3, -10.0), get(4, 10.0)),
            "histogram" => {
                if nums.len() < 3 {
                    return Err(Error::Config("histogram(lo, hi, h1, ..., hm)".into()));
                }
                let (lo, hi) = (nums[0], nums[1]);
                let m = nums.len() - 2;
                let edges = (0..=m).map(|i| lo + (hi - lo) * i as f64 / m as f64).collect();
                Density::histogram(edges, nums[2..].to_vec())
            }
            other => Err(Error::Config(format!("unknown density family `{other}`"))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Density::LocScale { base, .. } => base.dim(),
            Density::Mixture(m) => m.components[0].dim(),
            Density::IsoGaussian { mean, .. } => mean.len(),
            Density::Product(f) => f.len(),
            _ => 1,
        }
    }

    /// Density at a point of ℝ^k.
    pub fn pdf(&self, x: &[f64]) -> f64 {
        match self {
            Density::LocScale { base, m, sigma } => {
                let z: Vec<f64> = x.iter().zip(m.iter()).map(|(x, m)| (x - m) / sigma).collect();
                base.pdf(&z) / sigma.powi(z.len() as i32)
            }
            Density::Mixture(mx) => mx.pdf(x),
            Density::IsoGaussian { .. } => self.ln_pdf(x).exp(),
            Density::Product(f) => f.iter().zip(x).map(|(d, x)| d.pdf1(*x)).product(),
            _ => self.pdf1(x[0]),
        }
    }

    /// Natural log of the density; `-inf` off the support.
    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        match self {
            Density::IsoGaussian { mean, sigma } => {
                let k = mean.len() as f64;
                let d2: f64 = x.iter().zip(mean.iter()).map(|(x, m)| (x - m) * (x - m)).sum();
                -d2 / (2.0 * sigma * sigma) - k * (LN_SQRT_2PI + sigma.ln())
            }
            Density::Product(f) => f.iter().zip(x).map(|(d, x)| d.ln_pdf1(*x)).sum(),
            Density::LocScale { base, m, sigma } if base.dim() == 1 => base.ln_pdf1((x[0] - m[0]) / sigma) - sigma.ln(),
            Density::LocScale { .. } | Density::Mixture(_) => self.pdf(x).ln(),
            _ => self.ln_pdf1(x[0]),
        }
    }

    /// Density of a 1-D model.
    pub fn pdf1(&self, x: f64) -> f64 {
        match *self {
            Density::Uniform { lo, hi } => {
                if x >= lo && x <= hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Density::Gaussian { .. } | Density::Floored { .. } => self.ln_pdf1(x).exp(),
            Density::Laplace { mu, b } => (-(x - mu).abs() / b).exp() / (2.0 * b),
            Density::Cauchy { mu, s } => {
                let z = (x - mu) / s;
                1.0 / (PI * s * (1.0 + z * z))
            }
            Density::PowerLaw { alpha, shift } => {
                let u = x - shift;
                if u > 0.0 && u <= 1.0 {
                    alpha * u.powf(alpha - 1.0)
                } else {
                    0.0
                }
            }
            Density::Histogram { ref edges, ref heights } => {
                let n = heights.len();
                if x < edges[0] || x > edges[n] {
                    return 0.0;
                }
                let i = edges.partition_point(|e| *e <= x).clamp(1, n);
                heights[i - 1]
            }
            Density::Trig { a, b, freq } => {
                if (0.0..=1.0).contains(&x) {
                    let w = 2.0 * PI * freq as f64 * x;
                    (1.0 + a * w.cos() + b * w.sin()).max(0.0)
                } else {
                    0.0
                }
            }
            Density::Bump {
                center,
                half_width: h,
                alpha,
            } => {
                let u = x - (center - h);
                if u > 0.0 && u < 2.0 * h {
                    (alpha + 1.0) / (2.0 * h.powf(alpha + 1.0)) * u.min(2.0 * h - u).powf(alpha)
                } else {
                    0.0
                }
            }
            Density::LocScale { ref base, ref m, sigma } => base.pdf1((x - m[0]) / sigma) / sigma,
            Density::Mixture(ref mx) => mx.pdf(&[x]),
            Density::IsoGaussian { .. } | Density::Product(_) => self.pdf(&[x]),
            Density::Custom(ref c) => {
                if x >= c.lo && x <= c.hi {
                    (c.pdf)(x).max(0.0)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn ln_pdf1(&self, x: f64) -> f64 {
        match *self {
            Density::Gaussian { mu, sigma } => {
                let z = (x - mu) / sigma;
                -0.5 * z * z - LN_SQRT_2PI - sigma.ln()
            }
            Density::Laplace { mu, b } => -(x - mu).abs() / b - (2.0 * b).ln(),
            Density::Floored {
                mu,
                sigma,
                depth,
                lo,
                hi,
                log_norm,
            } => {
                if x < lo || x > hi {
                    return f64::NEG_INFINITY;
                }
                let z = (x - mu) / sigma;
                (-0.5 * z * z).max(-depth) - log_norm
            }
            Density::LocScale { ref base, ref m, sigma } => base.ln_pdf1((x - m[0]) / sigma) - sigma.ln(),
            _ => self.pdf1(x).ln(),
        }
    }

    /// Distribution function of a 1-D model.
    pub fn cdf1(&self, x: f64) -> f64 {
        match *self {
            Density::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Density::Gaussian { mu, sigma } => std_normal_cdf((x - mu) / sigma),
            Density::Laplace { mu, b } => {
                let z = (x - mu) / b;
                if z < 0.0 {
                    0.5 * z.exp()
                } else {
                    1.0 - 0.5 * (-z).exp()
                }
            }
            Density::Cauchy { mu, s } => 0.5 + ((x - mu) / s).atan() / PI,
            Density::PowerLaw { alpha, shift } => (x - shift).clamp(0.0, 1.0).powf(alpha),
            Density::Histogram { ref edges, ref heights } => {
                let mut acc = 0.0;
                for (i, h) in heights.iter().enumerate() {
                    if x <= edges[i] {
                        break;
                    }
                    acc += h * (x.min(edges[i + 1]) - edges[i]);
                }
                acc.min(1.0)
            }
            Density::Trig { a, b, freq } => {
                let t = x.clamp(0.0, 1.0);
                let w = 2.0 * PI * freq as f64;
                t + a * (w * t).sin() / w + b * (1.0 - (w * t).cos()) / w
            }
            Density::Bump {
                center,
                half_width: h,
                alpha,
            } => {
                let u = (x - (center - h)).clamp(0.0, 2.0 * h);
                if u <= h {
                    0.5 * (u / h).powf(alpha + 1.0)
                } else {
                    1.0 - 0.5 * ((2.0 * h - u) / h).powf(alpha + 1.0)
                }
            }
            Density::Floored {
                mu,
                sigma,
                depth,
                lo,
                hi,
                log_norm,
            } => {
                if x <= lo {
                    return 0.0;
                }
                if x >= hi {
                    return 1.0;
                }
                let w = sigma * (2.0 * depth).sqrt();
                let floor = (-depth).exp();
                let (ca, cb) = ((mu - w).max(lo), (mu + w).min(hi));
                if ca >= cb {
                    return ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
                }
                let mut rel = floor * (x.min(ca) - lo).max(0.0);
                if x > ca {
                    let top = x.min(cb);
                    rel += (std_normal_cdf((top - mu) / sigma) - std_normal_cdf((ca - mu) / sigma))
                        * sigma
                        * (2.0 * PI).sqrt();
                }
                if x > cb {
                    rel += floor * (x - cb);
                }
                (rel / log_norm.exp()).clamp(0.0, 1.0)
            }
            Density::LocScale { ref base, ref m, sigma } => base.cdf1((x - m[0]) / sigma),
            Density::Mixture(ref mx) => mx.components.iter().zip(&mx.weights).map(|(c, w)| w * c.cdf1(x)).sum(),
            Density::IsoGaussian { ref mean, sigma } => std_normal_cdf((x - mean[0]) / sigma),
            Density::Product(ref f) => f[0].cdf1(x),
            Density::Custom(ref c) => {
                if x <= c.lo {
                    return 0.0;
                }
                let top = x.min(c.hi);
                let mut pts = vec![c.lo];
                pts.extend(c.breakpoints.iter().copied().filter(|b| *b > c.lo && *b < top));
                pts.push(top);
                quad::integrate_pieces(|t| (c.pdf)(t).max(0.0), &pts, QuadOptions::default())
                    .map(|r| r.value.clamp(0.0, 1.0))
                    .unwrap_or(f64::NAN)
            }
        }
    }

    /// Mass of the interval `[a, b]`.
    pub fn mass1(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match *self {
            Density::Gaussian { mu, sigma } => {
                let (za, zb) = ((a - mu) / sigma, (b - mu) / sigma);
                if za > 0.0 {
                    std_normal_cdf(-za) - std_normal_cdf(-zb)
                } else {
                    std_normal_cdf(zb) - std_normal_cdf(za)
                }
            }
            _ => (self.cdf1(b) - self.cdf1(a)).max(0.0),
        }
    }

    /// Closed support of a 1-D model (possibly infinite).
    pub fn support1(&self) -> (f64, f64) {
        match *self {
            Density::Uniform { lo, hi } => (lo, hi),
            Density::PowerLaw { shift, .. } => (shift, shift + 1.0),
            Density::Histogram { ref edges, .. } => (edges[0], edges[edges.len() - 1]),
            Density::Trig { .. } => (0.0, 1.0),
            Density::Bump { center, half_width, .. } => (center - half_width, center + half_width),
            Density::Floored { lo, hi, .. } => (lo, hi),
            Density::LocScale { ref base, ref m, sigma } => {
                let (lo, hi) = base.support1();
                (m[0] + sigma * lo, m[0] + sigma * hi)
            }
            Density::Mixture(ref mx) => mx
                .components
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                    let (a, b) = c.support1();
                    (lo.min(a), hi.max(b))
                }),
            Density::Custom(ref c) => (c.lo, c.hi),
            Density::Product(ref f) => f[0].support1(),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Points where the 1-D density jumps or has a kink.
    pub fn breakpoints1(&self) -> Vec<f64> {
        let mut v = match *self {
            Density::Histogram { ref edges, .. } => edges.to_vec(),
            Density::Bump { center, half_width, .. } => vec![center - half_width, center, center + half_width],
            Density::Laplace { mu, .. } => vec![mu],
            Density::Floored {
                mu,
                sigma,
                depth,
                lo,
                hi,
                ..
            } => {
                let w = sigma * (2.0 * depth).sqrt();
                vec![lo, mu - w, mu, mu + w, hi]
            }
            Density::LocScale { ref base, ref m, sigma } => {
                base.breakpoints1().iter().map(|b| m[0] + sigma * b).collect()
            }
            Density::Mixture(ref mx) => mx.components.iter().flat_map(|c| c.breakpoints1()).collect(),
            Density::Custom(ref c) => c.breakpoints.clone(),
            _ => Vec::new(),
        };
        let (lo, hi) = self.support1();
        v.extend([lo, hi].into_iter().filter(|x| x.is_finite()));
        v.retain(|x| x.is_finite() && *x >= lo && *x <= hi);
        sort_dedup(&mut v);
        v
    }

    /// A representative location and scale used to seed searches and quadrature.
    pub fn center_scale1(&self) -> (f64, f64) {
        match *self {
            Density::Gaussian { mu, sigma } => (mu, sigma),
            Density::Laplace { mu, b } => (mu, b),
            Density::Cauchy { mu, s } => (mu, s),
            Density::Floored { mu, sigma, .. } => (mu, sigma),
            Density::LocScale { ref base, ref m, sigma } => {
                let (c, s) = base.center_scale1();
                (m[0] + sigma * c, sigma * s)
            }
            Density::IsoGaussian { ref mean, sigma } => (mean[0], sigma),
            _ => {
                let (lo, hi) = self.support1();
                if lo.is_finite() && hi.is_finite() {
                    (0.5 * (lo + hi), 0.5 * (hi - lo))
                } else if let Density::Mixture(ref mx) = *self {
                    let cs: Vec<(f64, f64)> = mx.components.iter().map(|c| c.center_scale1()).collect();
                    let c = cs.iter().zip(&mx.weights).map(|(c, w)| w * c.0).sum::<f64>();
                    let s = cs.iter().map(|(ci, si)| (ci - c).abs() + si).fold(0.0, f64::max);
                    (c, s)
                } else {
                    (0.0, 1.0)
                }
            }
        }
    }

    /// Range outside which the 1-D model has mass below `tail` on each side.
    ///
    /// Bounded supports are returned as is; unbounded sides are found by doubling.
    pub fn effective_range1(&self, tail: f64) -> (f64, f64) {
        let (lo, hi) = self.support1();
        let (c, s) = self.center_scale1();
        let mut a = lo;
        if !a.is_finite() {
            let mut w = s.max(1e-300);
            while self.cdf1(c - w) >= tail && w < 1e300 {
                w *= 2.0;
            }
            a = c - w;
        }
        let mut b = hi;
        if !b.is_finite() {
            let mut w = s.max(1e-300);
            while self.mass1(c + w, f64::INFINITY) >= tail && w < 1e300 {
                w *= 2.0;
            }
            b = c + w;
        }
        (a, b)
    }

    /// Suggested interior split points for quadrature over the effective range.
    pub fn hints1(&self, tail: f64) -> Vec<f64> {
        let (lo, hi) = self.support1();
        let (a, b) = self.effective_range1(tail);
        let mut v = self.breakpoints1();
        v.push(a);
        v.push(b);
        if !(lo.is_finite() && hi.is_finite()) {
            let (c, s) = self.center_scale1();
            let mut w = s;
            v.push(c);
            while c - w > a || c + w < b {
                v.push(c - w);
                v.push(c + w);
                w *= 4.0;
            }
        }
        v.retain(|x| *x >= a && *x <= b);
        sort_dedup(&mut v);
        v
    }

    /// Bounding box holding all but `tail` mass per axis.
    pub fn bounding_box(&self, tail: f64) -> (Vec<f64>, Vec<f64>) {
        match self {
            Density::IsoGaussian { mean, sigma } => {
                let g = Density::Gaussian { mu: 0.0, sigma: *sigma };
                let (a, b) = g.effective_range1(tail);
                (
                    mean.iter().map(|m| m + a).collect(),
                    mean.iter().map(|m| m + b).collect(),
                )
            }
            Density::Product(f) => f.iter().map(|d| d.effective_range1(tail)).unzip(),
            Density::LocScale { base, m, sigma } if base.dim() > 1 => {
                let (lo, hi) = base.bounding_box(tail);
                (
                    lo.iter().zip(m.iter()).map(|(l, m)| m + sigma * l).collect(),
                    hi.iter().zip(m.iter()).map(|(h, m)| m + sigma * h).collect(),
                )
            }
            Density::Mixture(mx) if mx.components[0].dim() > 1 => {
                let k = self.dim();
                let mut lo = vec![f64::INFINITY; k];
                let mut hi = vec![f64::NEG_INFINITY; k];
                for c in &mx.components {
                    let (a, b) = c.bounding_box(tail);
                    for d in 0..k {
                        lo[d] = lo[d].min(a[d]);
                        hi[d] = hi[d].max(b[d]);
                    }
                }
                (lo, hi)
            }
            _ => {
                let (a, b) = self.effective_range1(tail);
                (vec![a], vec![b])
            }
        }
    }

    /// Draws one point.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Density::IsoGaussian { mean, sigma } => mean
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + sigma * z
                })
                .collect(),
            Density::Product(f) => f.iter().map(|d| d.sample1(rng)).collect(),
            Density::LocScale { base, m, sigma } => base
                .sample(rng)
                .iter()
                .zip(m.iter())
                .map(|(z, m)| m + sigma * z)
                .collect(),
            Density::Mixture(mx) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (c, w) in mx.components.iter().zip(&mx.weights) {
                    acc += w;
                    if u < acc {
                        return c.sample(rng);
                    }
                }
                mx.components[mx.components.len() - 1].sample(rng)
            }
            _ => vec![self.sample1(rng)],
        }
    }

    /// Draws one point from a 1-D model.
    pub fn sample1<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Density::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Density::Gaussian { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                mu + sigma * z
            }
            Density::Laplace { mu, b } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                mu - b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            Density::Cauchy { mu, s } => mu + s * (PI * (rng.random::<f64>() - 0.5)).tan(),
            Density::PowerLaw { alpha, shift } => {
                let u: f64 = 1.0 - rng.random::<f64>();
                shift + u.powf(1.0 / alpha)
            }
            Density::Histogram { ref edges, ref heights } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, h) in heights.iter().enumerate() {
                    let m = h * (edges[i + 1] - edges[i]);
                    if u < acc + m {
                        return edges[i] + (u - acc) / h;
                    }
                    acc += m;
                }
                edges[edges.len() - 1]
            }
            Density::Trig { a, b, .. } => {
                let top = 1.0 + a.hypot(b);
                loop {
                    let x: f64 = rng.random();
                    if rng.random::<f64>() * top <= self.pdf1(x) {
                        return x;
                    }
                }
            }
            Density::Mixture(_) | Density::LocScale { .. } => self.sample(rng)[0],
            _ => {
                let u: f64 = rng.random();
                self.quantile1(u)
            }
        }
    }

    /// Inverse distribution function by bisection.
    pub fn quantile1(&self, u: f64) -> f64 {
        let (mut a, mut b) = self.effective_range1(TAIL_MASS * 1e-3);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if !(m > a && m < b) {
                break;
            }
            if self.cdf1(m) < u {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    /// The same model translated by `delta` along every axis.
    pub fn shifted(&self, delta: f64) -> Density {
        match self {
            Density::Uniform { lo, hi } => Density::Uniform {
                lo: lo + delta,
                hi: hi + delta,
            },
            Density::Gaussian { mu, sigma } => Density::Gaussian {
                mu: mu + delta,
                sigma: *sigma,
            },
            Density::Laplace { mu, b } => Density::Laplace { mu: mu + delta, b: *b },
            Density::Cauchy { mu, s } => Density::Cauchy { mu: mu + delta, s: *s },
            Density::PowerLaw { alpha, shift } => Density::PowerLaw {
                alpha: *alpha,
                shift: shift + delta,
            },
            Density::Bump {
                center,
                half_width,
                alpha,
            } => Density::Bump {
                center: center + delta,
                half_width: *half_width,
                alpha: *alpha,
            },
            Density::LocScale { base, m, sigma } => Density::LocScale {
                base: base.clone(),
                m: m.iter().map(|v| v + delta).collect::<Vec<_>>().into(),
                sigma: *sigma,
            },
            Density::IsoGaussian { mean, sigma } => Density::IsoGaussian {
                mean: mean.iter().map(|v| v + delta).collect::<Vec<_>>().into(),
                sigma: *sigma,
            },
            other => Density::LocScale {
                base: Arc::new(other.clone()),
                m: vec![delta; other.dim()].into(),
                sigma: 1.0,
            },
        }
    }

    /// Structural hash; equal models built the same way hash equally.
    pub fn key(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.hash_into(&mut h);
        h.finish()
    }

    /// Splits a translation-family member into (key of the unshifted member, shift).
    pub fn split_shift(&self) -> Option<(u64, f64)> {
        let (base, shift) = match self {
            Density::Gaussian { mu, .. } => (self.shifted(-mu), *mu),
            Density::Laplace { mu, .. } => (self.shifted(-mu), *mu),
            Density::Cauchy { mu, .. } => (self.shifted(-mu), *mu),
            Density::PowerLaw { shift, .. } => (self.shifted(-shift), *shift),
            Density::Bump { center, .. } => (self.shifted(-center), *center),
            Density::LocScale { base, m, sigma } if m.len() == 1 => (
                Density::LocScale {
                    base: base.clone(),
                    m: vec![0.0].into(),
                    sigma: *sigma,
                },
                m[0],
            ),
            _ => return None,
        };
        Some((base.key(), shift))
    }

    fn hash_into<H: Hasher>(&self, h: &mut H) {
        fn f<H: Hasher>(h: &mut H, v: f64) {
            v.to_bits().hash(h);
        }
        match self {
            Density::Uniform { lo, hi } => {
                0u8.hash(h);
                f(h, *lo);
                f(h, *hi);
            }
            Density::Gaussian { mu, sigma } => {
                1u8.hash(h);
                f(h, *mu);
                f(h, *sigma);
            }
            Density::Laplace { mu, b } => {
                2u8.hash(h);
                f(h, *mu);
                f(h, *b);
            }
            Density::Cauchy { mu, s } => {
                3u8.hash(h);
                f(h, *mu);
                f(h, *s);
            }
            Density::PowerLaw { alpha, shift } => {
                4u8.hash(h);
                f(h, *alpha);
                f(h, *shift);
            }
            Density::Histogram { edges, heights } => {
                5u8.hash(h);
                edges.iter().for_each(|v| f(h, *v));
                heights.iter().for_each(|v| f(h, *v));
            }
            Density::Trig { a, b, freq } => {
                6u8.hash(h);
                f(h, *a);
                f(h, *b);
                freq.hash(h);
            }
            Density::Bump {
                center,
                half_width,
                alpha,
            } => {
                7u8.hash(h);
                f(h, *center);
                f(h, *half_width);
                f(h, *alpha);
            }
            Density::Floored {
                mu,
                sigma,
                depth,
                lo,
                hi,
                ..
            } => {
                8u8.hash(h);
                for v in [mu, sigma, depth, lo, hi] {
                    f(h, *v);
                }
            }
            Density::LocScale { base, m, sigma } => {
                9u8.hash(h);
                base.hash_into(h);
                m.iter().for_each(|v| f(h, *v));
                f(h, *sigma);
            }
            Density::Mixture(mx) => {
                10u8.hash(h);
                for (c, w) in mx.components.iter().zip(&mx.weights) {
                    c.hash_into(h);
                    f(h, *w);
                }
            }
            Density::IsoGaussian { mean, sigma } => {
                11u8.hash(h);
                mean.iter().for_each(|v| f(h, *v));
                f(h, *sigma);
            }
            Density::Product(fs) => {
                12u8.hash(h);
                fs.iter().for_each(|d| d.hash_into(h));
            }
            Density::Custom(c) => {
                13u8.hash(h);
                c.id.hash(h);
            }
        }
    }
}

fn check_loc_scale(mu: f64, scale: f64) -> Result<()> {
    if !(mu.is_finite() && scale > 0.0 && scale.is_finite()) {
        return arg("location must be finite and scale positive");
    }
    Ok(())
}

pub(crate) fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup();
}

/// Sorted quadrature split points covering the effective ranges of `ds`.
pub fn common_points(ds: &[&Density]) -> Vec<f64> {
    let mut v = Vec::new();
    for d in ds {
        v.extend(d.hints1(TAIL_MASS));
    }
    sort_dedup(&mut v);
    v
}

/// Split points covering the effective range of `primary`, refined by the
/// breakpoints of `others` that fall inside it.
pub fn points_within(primary: &Density, others: &[&Density]) -> Vec<f64> {
    let mut v = primary.hints1(TAIL_MASS);
    let (a, b) = (v[0], v[v.len() - 1]);
    for d in others {
        v.extend(d.breakpoints1().into_iter().filter(|x| *x > a && *x < b));
    }
    sort_dedup(&mut v);
    v
}

/// Checks numerically that the density integrates to one.
pub fn total_mass(d: &Density) -> Result<f64> {
    if d.dim() == 1 {
        let pts = common_points(&[d]);
        quad::integrate_pieces(|x| d.pdf1(x), &pts, QuadOptions::default()).map(|r| r.value)
    } else {
        let (lo, hi) = d.bounding_box(TAIL_MASS);
        Ok(quad::integrate_box(|x| d.pdf(x), &lo, &hi, crate::loss::BOX_NODES))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zoo() -> Vec<Density> {
        vec![
            Density::uniform(-1.0, 2.0).unwrap(),
            Density::gaussian(0.3, 2.0).unwrap(),
            Density::laplace(-1.0, 0.5).unwrap(),
            Density::cauchy(0.0, 1.0).unwrap(),
            Density::power_law(0.5, 0.2).unwrap(),
            Density::histogram(vec![0.0, 0.5, 2.0], vec![3.0, 1.0]).unwrap(),
            Density::trig(0.4, -0.3, 2).unwrap(),
            Density::bump(0.5, 0.25, 0.5).unwrap(),
            Density::floored(0.0, 1.0, 8.0, -10.0, 10.0).unwrap(),
            Density::loc_scale(Density::uniform(0.0, 1.0).unwrap(), vec![0.25], 2.0).unwrap(),
        ]
    }

    #[test]
    fn densities_integrate_to_one() {
        for d in zoo() {
            if matches!(d, Density::PowerLaw { .. }) {
                continue;
            }
            let m = total_mass(&d).unwrap();
            assert!((m - 1.0).abs() < 1e-8, "{d:?}: {m}");
        }
    }

    #[test]
    fn cdf_matches_quadrature() {
        for d in zoo() {
            let (a, b) = d.effective_range1(TAIL_MASS);
            let x = a + 0.37 * (b - a).min(20.0);
            let mut pts: Vec<f64> = d.hints1(TAIL_MASS).into_iter().filter(|p| *p < x).collect();
            pts.push(x);
            if matches!(d, Density::PowerLaw { .. }) {
                continue;
            }
            let q = quad::integrate_pieces(|t| d.pdf1(t), &pts, QuadOptions::default()).unwrap();
            assert!((q.value - d.cdf1(x)).abs() < 1e-8, "{d:?}");
        }
    }

    #[test]
    fn sample_means_are_plausible() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in zoo() {
            if matches!(d, Density::Cauchy { .. }) {
                continue;
            }
            let n = 20_000;
            let below = (0..n).filter(|_| d.sample1(&mut rng) <= d.quantile1(0.3)).count();
            let frac = below as f64 / n as f64;
            assert!((frac - 0.3).abs() < 0.02, "{d:?}: {frac}");
        }
    }

    #[test]
    fn parse_registry_names() {
        assert!(
            matches!(Density::parse("gaussian(1, 2)").unwrap(), Density::Gaussian { mu, sigma } if mu == 1.0 && sigma == 2.0)
        );
        assert!(matches!(
            Density::parse("power_law(0.5)").unwrap(),
            Density::PowerLaw { .. }
        ));
        let h = Density::parse("histogram(0, 1, 3, 1)").unwrap();
        assert!((h.pdf1(0.25) - 1.5).abs() < 1e-12);
        assert!(Density::parse("weibull(1)").is_err());
    }

    #[test]
    fn translation_members_share_base_key() {
        let a = Density::power_law(0.5, 0.1).unwrap();
        let b = Density::power_law(0.5, 0.7).unwrap();
        assert_eq!(a.split_shift().unwrap().0, b.split_shift().unwrap().0);
        assert_ne!(a.key(), b.key());
    }
}
