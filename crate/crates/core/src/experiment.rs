//! Config-driven simulations: data scenarios, posteriors and concentration
//! diagnostics, with CSV and JSON reports.
//!
//! Configs are flat `key = value` text; `#` starts a comment. Keys:
//!
//! | key | values | default |
//! |-----|--------|---------|
//! | `scenario` | `iid`, `contaminated`, `non_iid` | `iid` |
//! | `model` | `translation(p, q, σ)`, `locscale(class, n, k, K)`, `sparse(k, R, gaussian(σ))` | required |
//! | `grid` | `uniform(lo, hi, count)`, `dyadic(half_width, log2_inv_step, reach)` | `uniform(-3, 3, 121)` |
//! | `truth` | parameter list, `random(lo, hi)`, or a density expression | `0` |
//! | `family` / `families` | `tv`, `hellinger`, `kl(a)`, `lj(j, R)`; comma list for `families` | `tv` |
//! | `c`, `gamma` | positive reals | `0.1`, `0.01` |
//! | `beta` | real, `auto(α)`, `auto`, `bayes`; `beta.<family>` overrides | `auto(0.05)` |
//! | `n`, `replications`, `seed` | integers | `100`, `1`, `0` |
//! | `epsilon`, `outlier` | contamination level and law | `0`, narrow uniform at 1000 base scales |
//! | `marginals` | `strata(lo, hi)` or `;`-separated densities | `strata(0, 1)` |
//! | `loss` | `tv`, `hellinger`, `kl` | the family's own loss |
//! | `n_outer`, `n_inner` | Monte-Carlo sizes for sampled priors | `1000`, `1000` |
//! | `window` | location-scale index window half-width | `2` |
//! | `csv`, `json` | output paths | none |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::thm1_constants;
use crate::density::{Density, MixtureMeasure};
use crate::error::{Error, Result};
use crate::family::{FamilyKind, TestFamily};
use crate::geometry::{
    concentration_radius, select_beta_alpha, BetaGrid, DistanceProfile, PriorGeometry, RadiusQuery, RadiusResult,
};
use crate::loss::{hellinger_sq, kl_divergence, lj_loss, tv_distance};
use crate::models::locscale::{BaseClass, LocScaleNet};
use crate::models::sparse::SparsePrior;
use crate::models::translation::voronoi_prior;
use crate::posterior::{
    posterior_fit, posterior_mc, sample_indices, split_seed, Atom, Dataset, FinitePrior, PosteriorConfig, SampledPrior,
};

pub const REPORT_SCHEMA: &str = "rp-report/1";
pub const RADIUS_POINTS: usize = 32;
pub const DEFAULT_ALPHA: f64 = 0.05;

fn cfg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

/// Parses flat `key = value` text.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return cfg_err(format!("line {}: expected `key = value`", i + 1));
        };
        let k = k.trim().to_string();
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return cfg_err(format!("line {}: duplicate key `{k}`", i + 1));
        }
    }
    Ok(out)
}

/// Splits `name(a, b(c, d))` into `name` and its top-level arguments.
pub fn split_call(s: &str) -> Result<(String, Vec<String>)> {
    let s = s.trim();
    let Some(open) = s.find('(') else {
        return Ok((s.to_string(), Vec::new()));
    };
    if !s.ends_with(')') {
        return cfg_err(format!("unbalanced call `{s}`"));
    }
    let inner = &s[open + 1..s.len() - 1];
    Ok((s[..open].trim().to_string(), split_top(inner, ',')))
}

fn split_top(s: &str, sep: char) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
        if ch == sep && depth == 0 {
            out.push(cur.trim().to_string());
            cur.clear();
        } else {
            cur.push(ch);
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn num(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("expected a number, got `{s}`")))
}

fn nums(args: &[String]) -> Result<Vec<f64>> {
    args.iter().map(|a| num(a)).collect()
}

/// Parses `tv`, `hellinger`, `kl(a)` or `lj(j, R)`.
pub fn parse_family(s: &str) -> Result<TestFamily> {
    let (name, args) = split_call(s)?;
    TestFamily::by_name(&name, &nums(&args)?)
}

/// Grid of translation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    Uniform {
        lo: f64,
        hi: f64,
        count: usize,
    },
    /// Step `2^-log2_inv_step` on `[-half_width, half_width]`, then steps
    /// doubling outwards up to `±reach`.
    Dyadic {
        half_width: f64,
        log2_inv_step: i32,
        reach: f64,
    },
}

impl GridSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, args) = split_call(s)?;
        let v = nums(&args)?;
        match (name.as_str(), v.as_slice()) {
            ("uniform", [lo, hi, count]) if hi > lo && *count >= 2.0 => Ok(GridSpec::Uniform {
                lo: *lo,
                hi: *hi,
                count: *count as usize,
            }),
            ("dyadic", [hw, l, reach]) if *hw > 0.0 && reach >= hw => Ok(GridSpec::Dyadic {
                half_width: *hw,
                log2_inv_step: *l as i32,
                reach: *reach,
            }),
            _ => cfg_err(format!("bad grid `{s}`")),
        }
    }

    pub fn points(&self) -> Vec<f64> {
        match *self {
            GridSpec::Uniform { lo, hi, count } => (0..count)
                .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                .collect(),
            GridSpec::Dyadic {
                half_width,
                log2_inv_step,
                reach,
            } => {
                let h = 2f64.powi(-log2_inv_step);
                let k = (half_width / h).floor() as i64;
                let mut pts: Vec<f64> = (-k..=k).map(|i| i as f64 * h).collect();
                let mut x = k as f64 * h;
                let mut step = h;
                loop {
                    step *= 2.0;
                    x += step;
                    if x > reach {
                        break;
                    }
                    pts.push(x);
                    pts.push(-x);
                }
                pts.sort_by(f64::total_cmp);
                pts
            }
        }
    }
}

/// Model preset with its prior.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    /// `p(· - θ)` with `θ` on a grid weighted by `σ^-1 q(·/σ)`. A floored
    /// Gaussian base keeps its support window fixed and moves its centre.
    Translation {
        base: Density,
        q: Density,
        sigma: f64,
        grid: GridSpec,
    },
    LocScale {
        class: BaseClass,
        n: usize,
        k: usize,
        big_k: f64,
        window: i64,
    },
    Sparse {
        k: usize,
        r: f64,
        sigma: f64,
    },
}

impl ModelSpec {
    pub fn parse(s: &str, grid: GridSpec, window: i64) -> Result<Self> {
        let (name, args) = split_call(s)?;
        match (name.as_str(), args.len()) {
            ("translation", 3) => {
                let base = Density::parse(&args[0])?;
                let q = crate::models::translation::prior_by_name(&args[1])?;
                let sigma = num(&args[2])?;
                if !(sigma > 0.0) || base.dim() != 1 {
                    return cfg_err("translation needs a 1-D base and sigma > 0");
                }
                Ok(ModelSpec::Translation { base, q, sigma, grid })
            }
            ("locscale", 4) => Ok(ModelSpec::LocScale {
                class: BaseClass::parse(&args[0])?,
                n: num(&args[1])? as usize,
                k: num(&args[2])? as usize,
                big_k: num(&args[3])?,
                window,
            }),
            ("sparse", 3) => {
                let (fam, fa) = split_call(&args[2])?;
                if fam != "gaussian" || fa.len() != 1 {
                    return cfg_err("sparse models support `gaussian(sigma)` only");
                }
                Ok(ModelSpec::Sparse {
                    k: num(&args[0])? as usize,
                    r: num(&args[1])?,
                    sigma: num(&fa[0])?,
                })
            }
            _ => cfg_err(format!("unknown model `{s}`")),
        }
    }

    /// The member with parameter `theta`.
    pub fn member(&self, theta: &[f64]) -> Result<Density> {
        match self {
            ModelSpec::Translation { base, .. } => {
                if theta.len() != 1 {
                    return cfg_err("translation parameters are scalars");
                }
                Ok(locate(base, theta[0]))
            }
            ModelSpec::Sparse { k, sigma, .. } => {
                if theta.len() != *k {
                    return cfg_err(format!("sparse parameters need {k} coordinates"));
                }
                Density::iso_gaussian(theta.to_vec(), *sigma)
            }
            ModelSpec::LocScale { .. } => cfg_err("location-scale truths are given as densities"),
        }
    }
}

/// Scale parameter of a 1-D base density; 1 for shapes without one.
pub fn base_scale(d: &Density) -> f64 {
    match *d {
        Density::Gaussian { sigma, .. } | Density::Floored { sigma, .. } => sigma,
        Density::Laplace { b, .. } => b,
        Density::Cauchy { s, .. } => s,
        _ => 1.0,
    }
}

/// `p(· - θ)`; floored Gaussians move their centre inside a fixed window.
pub fn locate(base: &Density, theta: f64) -> Density {
    match *base {
        Density::Floored {
            mu,
            sigma,
            depth,
            lo,
            hi,
            ..
        } => Density::floored(mu + theta, sigma, depth, lo, hi).expect("same window"),
        _ => base.shifted(theta),
    }
}

#[derive(Debug, Clone)]
pub enum TruthSpec {
    Param(Vec<f64>),
    Random { lo: f64, hi: f64 },
    Density(Density),
}

impl TruthSpec {
    pub fn parse(s: &str) -> Result<Self> {
        if let Ok(v) = s.split(',').map(num).collect::<Result<Vec<f64>>>() {
            return Ok(TruthSpec::Param(v));
        }
        let (name, args) = split_call(s)?;
        if name == "random" {
            let v = nums(&args)?;
            if v.len() != 2 || !(v[1] > v[0]) {
                return cfg_err("random(lo, hi) needs lo < hi");
            }
            return Ok(TruthSpec::Random { lo: v[0], hi: v[1] });
        }
        Ok(TruthSpec::Density(Density::parse(s)?))
    }
}

#[derive(Debug, Clone)]
pub enum Marginals {
    /// Observation `i` uniform on the `i`-th of `n` equal strata of `[lo, hi]`.
    Strata { lo: f64, hi: f64 },
    /// Observation `i` from entry `i mod len`.
    List(Vec<Density>),
}

#[derive(Debug, Clone)]
pub enum Scenario {
    Iid,
    /// `(1 - ε) P* + ε Q_out`, drawn i.i.d.
    Contaminated {
        epsilon: f64,
        outlier: Density,
    },
    NonIid(Marginals),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum BetaSpec {
    Fixed(f64),
    /// `β_α` from the prior geometry.
    Auto(f64),
    /// `β = 2a` for the log-likelihood family.
    Bayes,
}

impl BetaSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, args) = split_call(s)?;
        match (name.as_str(), args.len()) {
            ("auto", 0) => Ok(BetaSpec::Auto(DEFAULT_ALPHA)),
            ("auto", 1) => Ok(BetaSpec::Auto(num(&args[0])?)),
            ("bayes", 0) => Ok(BetaSpec::Bayes),
            _ => {
                let b = num(s)?;
                if !(b > 0.0) {
                    return cfg_err("beta must be positive");
                }
                Ok(BetaSpec::Fixed(b))
            }
        }
    }
}

/// Loss used by the diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagLoss {
    Tv,
    Hellinger,
    Kl,
    Lj(f64),
}

impl DiagLoss {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "tv" => Ok(DiagLoss::Tv),
            "hellinger" => Ok(DiagLoss::Hellinger),
            "kl" => Ok(DiagLoss::Kl),
            other => cfg_err(format!("unknown loss `{other}`")),
        }
    }

    pub fn for_family(f: &TestFamily) -> Self {
        match f.kind {
            FamilyKind::Tv => DiagLoss::Tv,
            FamilyKind::Hellinger => DiagLoss::Hellinger,
            FamilyKind::Lj { j, .. } => DiagLoss::Lj(j),
            FamilyKind::Kl { .. } => DiagLoss::Kl,
        }
    }

    pub fn name(&self) -> String {
        match self {
            DiagLoss::Tv => "tv".into(),
            DiagLoss::Hellinger => "hellinger".into(),
            DiagLoss::Kl => "kl".into(),
            DiagLoss::Lj(j) => format!("lj({j})"),
        }
    }

    /// `ℓ(center, p)`.
    pub fn eval(&self, center: &Density, p: &Density) -> Result<f64> {
        match self {
            DiagLoss::Tv => tv_distance(center, p),
            DiagLoss::Hellinger => hellinger_sq(center, p),
            DiagLoss::Kl => kl_divergence(center, p),
            DiagLoss::Lj(j) => lj_loss(center, p, *j),
        }
    }
}

/// A parsed experiment config.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub model: ModelSpec,
    pub truth: TruthSpec,
    pub family: String,
    pub families: Vec<String>,
    pub c: f64,
    pub gamma: f64,
    pub beta: BetaSpec,
    pub beta_overrides: BTreeMap<String, BetaSpec>,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub loss: Option<DiagLoss>,
    pub n_outer: usize,
    pub n_inner: usize,
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    /// The key-value pairs as read.
    pub raw: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "scenario",
    "model",
    "grid",
    "truth",
    "family",
    "families",
    "c",
    "gamma",
    "beta",
    "n",
    "replications",
    "seed",
    "epsilon",
    "outlier",
    "marginals",
    "loss",
    "n_outer",
    "n_inner",
    "window",
    "csv",
    "json",
];

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_map(parse_flat(text)?)
    }

    pub fn from_map(raw: BTreeMap<String, String>) -> Result<Self> {
        for k in raw.keys() {
            if !KNOWN_KEYS.contains(&k.as_str()) && !k.starts_with("beta.") {
                return cfg_err(format!("unknown key `{k}`"));
            }
        }
        let get = |k: &str| raw.get(k).map(String::as_str);
        let int = |k: &str, d: usize| -> Result<usize> {
            match get(k) {
                None => Ok(d),
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::Config(format!("`{k}` must be an integer"))),
            }
        };
        let real = |k: &str, d: f64| -> Result<f64> { get(k).map_or(Ok(d), num) };

        let grid = GridSpec::parse(get("grid").unwrap_or("uniform(-3, 3, 121)"))?;
        let window = int("window", 2)? as i64;
        let model = ModelSpec::parse(
            get("model").ok_or_else(|| Error::Config("missing `model`".into()))?,
            grid,
            window,
        )?;
        let sigma = match &model {
            ModelSpec::Translation { base, .. } => base_scale(base),
            ModelSpec::Sparse { sigma, .. } => *sigma,
            ModelSpec::LocScale { .. } => 1.0,
        };
        let scenario = match get("scenario").unwrap_or("iid") {
            "iid" => Scenario::Iid,
            "contaminated" => {
                let epsilon = real("epsilon", 0.0)?;
                if !(0.0..1.0).contains(&epsilon) {
                    return cfg_err("epsilon must lie in [0, 1)");
                }
                let outlier = match get("outlier") {
                    Some(s) => Density::parse(s)?,
                    None => Density::uniform(1000.0 * sigma - 0.005, 1000.0 * sigma + 0.005)?,
                };
                Scenario::Contaminated { epsilon, outlier }
            }
            "non_iid" => {
                let m = get("marginals").unwrap_or("strata(0, 1)");
                let (name, args) = split_call(m)?;
                if name == "strata" {
                    let v = nums(&args)?;
                    if v.len() != 2 || !(v[1] > v[0]) {
                        return cfg_err("strata(lo, hi) needs lo < hi");
                    }
                    Scenario::NonIid(Marginals::Strata { lo: v[0], hi: v[1] })
                } else {
                    let list = split_top(m, ';')
                        .iter()
                        .map(|d| Density::parse(d))
                        .collect::<Result<Vec<_>>>()?;
                    if list.is_empty() {
                        return cfg_err("empty marginal list");
                    }
                    Scenario::NonIid(Marginals::List(list))
                }
            }
            other => return cfg_err(format!("unknown scenario `{other}`")),
        };
        let family = get("family").unwrap_or("tv").to_string();
        parse_family(&family)?;
        let families = match get("families") {
            Some(s) => split_top(s, ','),
            None => vec![family.clone()],
        };
        for f in &families {
            parse_family(f)?;
        }
        let mut beta_overrides = BTreeMap::new();
        for (k, v) in &raw {
            if let Some(name) = k.strip_prefix("beta.") {
                beta_overrides.insert(name.to_string(), BetaSpec::parse(v)?);
            }
        }
        let replications = int("replications", 1)?;
        let n = int("n", 100)?;
        if replications == 0 || n == 0 {
            return cfg_err("n and replications must be at least 1");
        }
        Ok(Self {
            scenario,
            model,
            truth: TruthSpec::parse(get("truth").unwrap_or("0"))?,
            family,
            families,
            c: real("c", 0.1)?,
            gamma: real("gamma", 0.01)?,
            beta: BetaSpec::parse(get("beta").unwrap_or("auto(0.05)"))?,
            beta_overrides,
            n,
            replications,
            seed: int("seed", 0)? as u64,
            loss: get("loss").map(DiagLoss::parse).transpose()?,
            n_outer: int("n_outer", 1000)?,
            n_inner: int("n_inner", 1000)?,
            csv: get("csv").map(PathBuf::from),
            json: get("json").map(PathBuf::from),
            raw,
        })
    }

    fn beta_spec(&self, family: &str) -> BetaSpec {
        let (name, _) = split_call(family).unwrap_or_default();
        self.beta_overrides.get(&name).copied().unwrap_or(self.beta)
    }
}

/// Prior of a prepared model.
#[derive(Debug, Clone)]
pub enum ModelPrior {
    Finite(FinitePrior),
    Sampled(SampledPrior),
}

/// A model with its prior, built once per experiment.
#[derive(Debug, Clone)]
pub struct PreparedModel {
    pub prior: ModelPrior,
    /// Location-scale truth, fixed at preparation.
    pub fixed_truth: Option<Density>,
}

pub fn prepare_model(cfg: &ExperimentConfig) -> Result<PreparedModel> {
    match &cfg.model {
        ModelSpec::Translation { base, q, sigma, grid } => {
            let pts = grid.points();
            let (q1, q2, s) = (q.clone(), q.clone(), *sigma);
            let prior = voronoi_prior(
                &pts,
                move |t| q1.cdf1(t / s),
                move |t| q2.pdf1(t / s) / s,
                |t| Atom::new(vec![t], locate(base, t)),
            )?;
            Ok(PreparedModel {
                prior: ModelPrior::Finite(prior),
                fixed_truth: None,
            })
        }
        ModelSpec::LocScale {
            class,
            n,
            k,
            big_k,
            window,
        } => {
            let TruthSpec::Density(p) = &cfg.truth else {
                return cfg_err("location-scale experiments need a density truth on [0, 1]");
            };
            let net = LocScaleNet::build(*class, *n, *k, *big_k)?;
            let centre = net.nearest(p, 0.0, 1.0);
            let prior = net.window(&net.neighbourhood(&centre, *window))?;
            Ok(PreparedModel {
                prior: ModelPrior::Finite(prior),
                fixed_truth: Some(p.clone()),
            })
        }
        ModelSpec::Sparse { k, r, sigma } => Ok(PreparedModel {
            prior: ModelPrior::Sampled(SparsePrior::new(*k, *r)?.gaussian_prior(*sigma)?),
            fixed_truth: None,
        }),
    }
}

/// One replication's data and its targets.
#[derive(Debug, Clone)]
pub struct ReplicationData {
    pub x: Dataset,
    /// Uncontaminated truth `P*`.
    pub p_star: Density,
    /// Average marginal `P̄*`.
    pub p_bar: Density,
    pub theta_star: Option<Vec<f64>>,
}

/// Draws the truth and the data of replication `rep`.
pub fn replication_data(cfg: &ExperimentConfig, model: &PreparedModel, rep: usize) -> Result<ReplicationData> {
    let rep_seed = split_seed(cfg.seed, rep as u64);
    let mut truth_rng = ChaCha8Rng::seed_from_u64(split_seed(rep_seed, 1));
    let (p_star, theta_star) = match (&model.fixed_truth, &cfg.truth) {
        (Some(p), _) => (p.clone(), None),
        (None, TruthSpec::Param(v)) => (cfg.model.member(v)?, Some(v.clone())),
        (None, TruthSpec::Random { lo, hi }) => {
            let dim = match cfg.model {
                ModelSpec::Sparse { k, .. } => k,
                _ => 1,
            };
            let v: Vec<f64> = (0..dim).map(|_| truth_rng.random_range(*lo..*hi)).collect();
            (cfg.model.member(&v)?, Some(v))
        }
        (None, TruthSpec::Density(p)) => (p.clone(), None),
    };
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(rep_seed, 0));
    let (points, p_bar) = match &cfg.scenario {
        Scenario::Iid | Scenario::Contaminated { .. } => {
            let mut pts: Vec<Vec<f64>> = (0..n).map(|_| p_star.sample(&mut rng)).collect();
            let mut p_bar = p_star.clone();
            if let Scenario::Contaminated { epsilon, outlier } = &cfg.scenario {
                // a separate stream keeps ε = 0 identical to the i.i.d. draw
                let mut side = ChaCha8Rng::seed_from_u64(split_seed(rep_seed, 4));
                for p in pts.iter_mut() {
                    if side.random::<f64>() < *epsilon {
                        *p = outlier.sample(&mut side);
                    }
                }
                if *epsilon > 0.0 {
                    p_bar = Density::mixture(MixtureMeasure::new(
                        vec![p_star.clone(), outlier.clone()],
                        vec![1.0 - epsilon, *epsilon],
                    )?);
                }
            }
            (pts, p_bar)
        }
        Scenario::NonIid(Marginals::Strata { lo, hi }) => {
            let w = (hi - lo) / n as f64;
            let pts = (0..n)
                .map(|i| vec![lo + w * (i as f64 + rng.random::<f64>())])
                .collect();
            (pts, Density::uniform(*lo, *hi)?)
        }
        Scenario::NonIid(Marginals::List(list)) => {
            let pts = (0..n).map(|i| list[i % list.len()].sample(&mut rng)).collect();
            let used: Vec<Density> = (0..n.min(list.len())).map(|i| list[i].clone()).collect();
            let counts: Vec<f64> = (0..used.len())
                .map(|i| ((n - i) as f64 / list.len() as f64).ceil())
                .collect();
            (pts, Density::mixture(MixtureMeasure::new(used, counts)?))
        }
    };
    Ok(ReplicationData {
        x: Dataset::new(points)?,
        p_star,
        p_bar,
        theta_star,
    })
}

/// Radii `RADIUS_POINTS` geometric points from `1/(nβ a1)` to `max(1, 2/(nβ a1))`.
pub fn radius_grid(n: usize, beta: f64, a1: f64) -> Vec<f64> {
    let lo = 1.0 / (n as f64 * beta * a1);
    let hi = 1f64.max(2.0 * lo);
    let step = (hi / lo).powf(1.0 / (RADIUS_POINTS - 1) as f64);
    (0..RADIUS_POINTS).map(|i| lo * step.powi(i as i32)).collect()
}

/// Per-replication diagnostics for one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub family: String,
    pub beta: f64,
    /// `ok` or the error that stopped the replication.
    pub status: String,
    /// Posterior mass of `B(P̄*, r)` on the radius grid.
    pub ball_masses: Vec<f64>,
    /// `ℓ(P̄*, P̂)` for one posterior draw `P̂`.
    pub estimator_loss: Option<f64>,
    /// `|θ̂ - θ*|_∞` when the model is parametric.
    pub param_error: Option<f64>,
    /// Grid bound on `r_n(β, ·)` at the atom closest to `P̄*`.
    pub r_n: Option<f64>,
    pub wall_ms: f64,
}

impl ReplicationRecord {
    fn failed(replication: usize, seed: u64, family: &str, beta: f64, e: &Error) -> Self {
        Self {
            replication,
            seed,
            family: family.to_string(),
            beta,
            status: e.to_string(),
            ball_masses: Vec::new(),
            estimator_loss: None,
            param_error: None,
            r_n: None,
            wall_ms: 0.0,
        }
    }

    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// A family ready to run: its test family, posterior config and diagnostics loss.
#[derive(Debug, Clone)]
pub struct FamilyRun {
    pub name: String,
    pub config: PosteriorConfig,
    pub loss: DiagLoss,
    pub radii: Vec<f64>,
}

/// Checks feasibility, resolves `β` and builds the posterior config.
pub fn prepare_family(cfg: &ExperimentConfig, model: &PreparedModel, name: &str) -> Result<FamilyRun> {
    let family = parse_family(name)?;
    let ledger = thm1_constants(family.a0, family.a1, family.tau, cfg.c, cfg.gamma)?;
    if !ledger.feasible.all() {
        return Err(Error::Infeasible(ledger.to_json()));
    }
    let loss = cfg.loss.unwrap_or_else(|| DiagLoss::for_family(&family));
    let beta = match cfg.beta_spec(name) {
        BetaSpec::Fixed(b) => b,
        BetaSpec::Bayes => match family.kind {
            FamilyKind::Kl { a } => 2.0 * a,
            _ => return cfg_err("`bayes` applies to the kl family only"),
        },
        BetaSpec::Auto(alpha) => {
            let ModelPrior::Finite(prior) = &model.prior else {
                return cfg_err("auto beta needs a finite prior");
            };
            let geom = PriorGeometry::finite(prior, |a, b| loss.eval(a, b))?;
            select_beta_alpha(&geom, alpha, cfg.n, family.a1, cfg.gamma, &BetaGrid::default())?
                .ok_or_else(|| Error::Precondition("beta_alpha exceeds the beta grid".into()))?
        }
    };
    let config = PosteriorConfig::new(family.clone(), cfg.c, beta, cfg.gamma)?;
    Ok(FamilyRun {
        name: name.to_string(),
        radii: radius_grid(cfg.n, beta, family.a1),
        config,
        loss,
    })
}

/// Runs one family on one replication's data.
pub fn analyse(
    cfg: &ExperimentConfig,
    model: &PreparedModel,
    run: &FamilyRun,
    data: &ReplicationData,
    rep: usize,
) -> Result<ReplicationRecord> {
    let start = Instant::now();
    let rep_seed = split_seed(cfg.seed, rep as u64);
    let post = match &model.prior {
        ModelPrior::Finite(prior) => posterior_fit(&data.x, prior, &run.config)?.posterior,
        ModelPrior::Sampled(prior) => {
            posterior_mc(
                &data.x,
                prior,
                &run.config,
                cfg.n_outer,
                cfg.n_inner,
                split_seed(rep_seed, 3),
            )?
            .sample
        }
    };
    let losses = post
        .atoms
        .par_iter()
        .map(|a| run.loss.eval(&data.p_bar, &a.density))
        .collect::<Result<Vec<f64>>>()?;
    let w = post.weights();
    let ball_masses: Vec<f64> = run
        .radii
        .iter()
        .map(|r| {
            w.iter()
                .zip(&losses)
                .filter(|(_, l)| **l <= *r)
                .map(|(w, _)| w)
                .sum::<f64>()
                .min(1.0)
        })
        .collect();
    let pick = sample_indices(&post, 1, split_seed(rep_seed, 2))[0];
    let param_error = data.theta_star.as_ref().and_then(|t| {
        let tag = &post.atoms[pick].tag;
        (tag.len() == t.len()).then(|| tag.iter().zip(t).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    });
    let r_n = match &model.prior {
        ModelPrior::Finite(prior) => radius_at_closest(cfg, run, prior, &data.p_bar)?.radius,
        ModelPrior::Sampled(_) => None,
    };
    Ok(ReplicationRecord {
        replication: rep,
        seed: rep_seed,
        family: run.name.clone(),
        beta: run.config.beta,
        status: "ok".into(),
        ball_masses,
        estimator_loss: Some(losses[pick]),
        param_error,
        r_n,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Radius scan centred at the atom of `prior` closest to `target`.
fn radius_at_closest(
    cfg: &ExperimentConfig,
    run: &FamilyRun,
    prior: &FinitePrior,
    target: &Density,
) -> Result<RadiusResult> {
    let losses = prior
        .atoms
        .par_iter()
        .map(|a| run.loss.eval(target, &a.density))
        .collect::<Result<Vec<f64>>>()?;
    let best = (0..losses.len())
        .min_by(|a, b| losses[*a].total_cmp(&losses[*b]))
        .expect("nonempty prior");
    let centre = &prior.atoms[best].density;
    let d = prior
        .atoms
        .par_iter()
        .map(|a| run.loss.eval(centre, &a.density))
        .collect::<Result<Vec<f64>>>()?;
    let profile = DistanceProfile::exact(&d, &prior.weights())?;
    let q = RadiusQuery::new(run.config.beta, cfg.gamma, cfg.n, run.config.family.a1)?;
    Ok(concentration_radius(&q, &profile))
}

/// `r_n(β, ·)` scan at the prior atom closest to the configured truth.
pub fn radius_scan(cfg: &ExperimentConfig) -> Result<(FamilyRun, RadiusResult)> {
    let model = prepare_model(cfg)?;
    let ModelPrior::Finite(prior) = &model.prior else {
        return cfg_err("radius scans need a finite prior");
    };
    let run = prepare_family(cfg, &model, &cfg.family)?;
    let data = replication_data(cfg, &model, 0)?;
    let res = radius_at_closest(cfg, &run, prior, &data.p_star)?;
    Ok((run, res))
}

/// Linear-interpolation quantile of the finite values.
pub fn quantile(values: &[f64], p: f64) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let h = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (i, f) = (h.floor() as usize, h - h.floor());
    Some(if i + 1 < v.len() {
        v[i] + f * (v[i + 1] - v[i])
    } else {
        v[i]
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub ok: usize,
    pub failures: usize,
    pub mean_ball_mass: Vec<f64>,
    /// 10%, 50% and 90% quantiles of the estimator loss.
    pub loss_quantiles: Option<[f64; 3]>,
    pub median_param_error: Option<f64>,
    pub median_r_n: Option<f64>,
}

fn summarize(records: &[ReplicationRecord], points: usize) -> Summary {
    let ok: Vec<&ReplicationRecord> = records.iter().filter(|r| r.ok()).collect();
    let mut mean = vec![0.0; points];
    for r in &ok {
        for (m, v) in mean.iter_mut().zip(&r.ball_masses) {
            *m += v / ok.len() as f64;
        }
    }
    let losses: Vec<f64> = ok.iter().filter_map(|r| r.estimator_loss).collect();
    let errs: Vec<f64> = ok.iter().filter_map(|r| r.param_error).collect();
    let rns: Vec<f64> = ok.iter().filter_map(|r| r.r_n).collect();
    let lq = match (quantile(&losses, 0.1), quantile(&losses, 0.5), quantile(&losses, 0.9)) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };
    Summary {
        ok: ok.len(),
        failures: records.len() - ok.len(),
        mean_ball_mass: if ok.is_empty() { Vec::new() } else { mean },
        loss_quantiles: lq,
        median_param_error: quantile(&errs, 0.5),
        median_r_n: quantile(&rns, 0.5),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub schema: String,
    pub config: BTreeMap<String, String>,
    pub family: String,
    pub beta: f64,
    pub loss: String,
    pub radii: Vec<f64>,
    pub replications: Vec<ReplicationRecord>,
    pub summary: Summary,
}

impl ConcentrationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per replication and radius; wall times are left out so
    /// that reruns produce identical bytes.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("replication,family,beta,r,ball_mass,estimator_loss,param_error,r_n,status\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for rec in &self.replications {
            if !rec.ok() {
                let _ = writeln!(
                    s,
                    "{},{},{},,,,,,\"{}\"",
                    rec.replication,
                    rec.family,
                    rec.beta,
                    rec.status.replace('"', "'")
                );
                continue;
            }
            for (r, m) in self.radii.iter().zip(&rec.ball_masses) {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},ok",
                    rec.replication,
                    rec.family,
                    rec.beta,
                    r,
                    m,
                    opt(rec.estimator_loss),
                    opt(rec.param_error),
                    opt(rec.r_n)
                );
            }
        }
        s
    }
}

fn run_records(
    cfg: &ExperimentConfig,
    model: &PreparedModel,
    runs: &[FamilyRun],
) -> Result<Vec<Vec<ReplicationRecord>>> {
    (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let data = replication_data(cfg, model, rep)?;
            Ok(runs
                .iter()
                .map(|run| {
                    analyse(cfg, model, run, &data, rep).unwrap_or_else(|e| {
                        ReplicationRecord::failed(rep, split_seed(cfg.seed, rep as u64), &run.name, run.config.beta, &e)
                    })
                })
                .collect())
        })
        .collect()
}

/// Runs the configured family over all replications.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ConcentrationReport> {
    let model = prepare_model(cfg)?;
    let run = prepare_family(cfg, &model, &cfg.family)?;
    let records: Vec<ReplicationRecord> = run_records(cfg, &model, std::slice::from_ref(&run))?
        .into_iter()
        .flatten()
        .collect();
    Ok(ConcentrationReport {
        schema: REPORT_SCHEMA.into(),
        config: cfg.raw.clone(),
        family: run.name.clone(),
        beta: run.config.beta,
        loss: run.loss.name(),
        summary: summarize(&records, run.radii.len()),
        radii: run.radii,
        replications: records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub family: String,
    pub beta: f64,
    pub replications: usize,
    pub failures: usize,
    pub median_loss: Option<f64>,
    pub median_param_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema: String,
    pub config: BTreeMap<String, String>,
    pub loss: String,
    pub rows: Vec<FamilyRow>,
    pub replications: Vec<ReplicationRecord>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from("family,beta,replications,failures,median_loss,median_param_error\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.family,
                r.beta,
                r.replications,
                r.failures,
                opt(r.median_loss),
                opt(r.median_param_error)
            );
        }
        s
    }

    pub fn row(&self, family: &str) -> Option<&FamilyRow> {
        self.rows.iter().find(|r| r.family == family)
    }
}

/// Feeds the same data streams to every family. Without an explicit `loss`
/// all families are scored in total variation.
pub fn compare_families(cfg: &ExperimentConfig, families: &[String]) -> Result<ComparisonReport> {
    if families.is_empty() {
        return cfg_err("no families to compare");
    }
    let mut cfg = cfg.clone();
    let loss = cfg.loss.unwrap_or(DiagLoss::Tv);
    cfg.loss = Some(loss);
    let model = prepare_model(&cfg)?;
    let runs = families
        .iter()
        .map(|f| prepare_family(&cfg, &model, f))
        .collect::<Result<Vec<_>>>()?;
    let per_rep = run_records(&cfg, &model, &runs)?;
    let rows = runs
        .iter()
        .enumerate()
        .map(|(j, run)| {
            let recs: Vec<&ReplicationRecord> = per_rep.iter().map(|r| &r[j]).collect();
            let ok: Vec<&&ReplicationRecord> = recs.iter().filter(|r| r.ok()).collect();
            FamilyRow {
                family: run.name.clone(),
                beta: run.config.beta,
                replications: recs.len(),
                failures: recs.len() - ok.len(),
                median_loss: quantile(&ok.iter().filter_map(|r| r.estimator_loss).collect::<Vec<_>>(), 0.5),
                median_param_error: quantile(&ok.iter().filter_map(|r| r.param_error).collect::<Vec<_>>(), 0.5),
            }
        })
        .collect();
    Ok(ComparisonReport {
        schema: REPORT_SCHEMA.into(),
        config: cfg.raw.clone(),
        loss: loss.name(),
        rows,
        replications: per_rep.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_config_rejects_junk() {
        assert!(parse_flat("a = 1\n# note\nb=2 # trailing").unwrap().len() == 2);
        assert!(parse_flat("a 1").is_err());
        assert!(parse_flat("a = 1\na = 2").is_err());
        assert!(ExperimentConfig::from_text("model = translation(laplace, gaussian, 1)\nbogus = 1").is_err());
    }

    #[test]
    fn nested_calls_split_at_top_level() {
        let (n, a) = split_call("translation(power_law(0.5, 0), gaussian, 1)").unwrap();
        assert_eq!(n, "translation");
        assert_eq!(a, vec!["power_law(0.5, 0)", "gaussian", "1"]);
    }

    #[test]
    fn dyadic_grid_is_symmetric_and_doubles() {
        let g = GridSpec::parse("dyadic(0.25, 3, 4)").unwrap().points();
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.len(), 13);
        let pos: Vec<f64> = g.iter().copied().filter(|x| *x > 0.25).collect();
        assert_eq!(pos, vec![0.5, 1.0, 2.0, 4.0]);
    }

    #[test]
    fn zero_contamination_matches_iid() {
        let base = "model = translation(laplace, gaussian, 1)\nn = 50\nseed = 9\nbeta = 0.5\n";
        let a = ExperimentConfig::from_text(base).unwrap();
        let b = ExperimentConfig::from_text(&format!("{base}scenario = contaminated\nepsilon = 0")).unwrap();
        let ma = prepare_model(&a).unwrap();
        let da = replication_data(&a, &ma, 3).unwrap();
        let db = replication_data(&b, &ma, 3).unwrap();
        assert!(da.x.iter().zip(db.x.iter()).all(|(a, b)| a == b));
    }

    #[test]
    fn radius_grid_spans_floor_to_one() {
        let g = radius_grid(100, 0.5, 0.5);
        assert_eq!(g.len(), RADIUS_POINTS);
        assert!((g[0] - 0.04).abs() < 1e-15 && (g[31] - 1.0).abs() < 1e-12);
    }
}
