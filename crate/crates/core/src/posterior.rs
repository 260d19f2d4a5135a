//! The two-level Gibbs posterior.
//!
//! For a prior `π` and data `X`, the pairwise score is
//! `T(X, P, Q) = Σ_i t_(P,Q)(X_i)`. The inner Gibbs measure
//! `π̃(dQ | P) ∝ exp(λ T(X, P, Q)) π(dQ)` averages it into `T(X, P)`, and the
//! posterior is `π̂(dP) ∝ exp(-β T(X, P)) π(dP)`. Every normalization is done
//! with log-sum-exp; `T` grows linearly in `n` and raw exponentials overflow.

use std::collections::HashMap;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{arg, Error, Result};
use crate::family::TestFamily;

/// Observations `X_1, …, X_n` in `ℝ^k`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    data: Vec<f64>,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = match points.first() {
            Some(p) if !p.is_empty() => p.len(),
            _ => return arg("dataset needs at least one point of positive dimension"),
        };
        if points.iter().any(|p| p.len() != dim) {
            return arg("dataset points differ in dimension");
        }
        Ok(Self {
            dim,
            data: points.into_iter().flatten().collect(),
        })
    }

    pub fn from_1d(xs: Vec<f64>) -> Result<Self> {
        if xs.is_empty() {
            return arg("dataset needs at least one point");
        }
        Ok(Self { dim: 1, data: xs })
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Coordinates of a 1-D dataset.
    pub fn as_1d(&self) -> Option<&[f64]> {
        (self.dim == 1).then_some(&self.data[..])
    }
}

/// A prior atom: a density labelled by its parameter vector.
#[derive(Debug, Clone)]
pub struct Atom {
    pub tag: Vec<f64>,
    pub density: Density,
}

impl Atom {
    pub fn new(tag: Vec<f64>, density: Density) -> Self {
        Self { tag, density }
    }
}

/// Normalizes log-weights in place; returns the log normalizer.
pub fn normalize_log(lw: &mut [f64]) -> f64 {
    let z = logsumexp(lw);
    for v in lw.iter_mut() {
        *v -= z;
    }
    z
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// A prior with finitely many atoms.
#[derive(Debug, Clone)]
pub struct FinitePrior {
    pub atoms: Vec<Atom>,
    /// Normalized so that `logsumexp = 0`.
    pub log_weights: Vec<f64>,
}

impl FinitePrior {
    pub fn new(atoms: Vec<Atom>, weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return arg("prior weights must be positive and finite");
        }
        Self::from_log_weights(atoms, weights.iter().map(|w| w.ln()).collect())
    }

    pub fn uniform(atoms: Vec<Atom>) -> Result<Self> {
        let m = atoms.len();
        Self::from_log_weights(atoms, vec![0.0; m])
    }

    pub fn from_log_weights(atoms: Vec<Atom>, mut log_weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != log_weights.len() {
            return arg("prior needs one weight per atom and at least one atom");
        }
        if log_weights.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return arg("log-weights must not be NaN or +inf");
        }
        let dim = atoms[0].density.dim();
        if atoms.iter().any(|a| a.density.dim() != dim) {
            return arg("prior atoms differ in dimension");
        }
        if normalize_log(&mut log_weights) == f64::NEG_INFINITY {
            return arg("prior has zero total weight");
        }
        Ok(Self { atoms, log_weights })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|v| v.exp()).collect()
    }

    pub fn densities(&self) -> Vec<&Density> {
        self.atoms.iter().map(|a| &a.density).collect()
    }

    /// Effective sample size `1 / Σ w²`.
    pub fn ess(&self) -> f64 {
        1.0 / self.log_weights.iter().map(|v| (2.0 * v).exp()).sum::<f64>()
    }

    pub fn max_weight(&self) -> f64 {
        self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp()
    }

    /// Index of the heaviest atom (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.log_weights.iter().enumerate() {
            if *v > self.log_weights[best] {
                best = i;
            }
        }
        best
    }

    /// `Σ w F(atom)`.
    pub fn expect(&self, f: impl Fn(&Atom) -> f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.log_weights)
            .map(|(a, lw)| lw.exp() * f(a))
            .sum()
    }
}

type Sampler = dyn Fn(&mut ChaCha8Rng) -> Atom + Send + Sync;
type LogRatio = dyn Fn(&Atom) -> f64 + Send + Sync;

/// A prior `π = C⁻¹ Π · ν` given by a sampler for `ν` and `log Π`.
#[derive(Clone)]
pub struct SampledPrior {
    sampler: Arc<Sampler>,
    log_ratio: Arc<LogRatio>,
}

impl std::fmt::Debug for SampledPrior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SampledPrior { .. }")
    }
}

impl SampledPrior {
    /// `log_ratio` is `log Π`; it may be `-inf` but not NaN.
    pub fn new(
        sampler: impl Fn(&mut ChaCha8Rng) -> Atom + Send + Sync + 'static,
        log_ratio: impl Fn(&Atom) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            sampler: Arc::new(sampler),
            log_ratio: Arc::new(log_ratio),
        }
    }

    /// `ν` uniform over the atoms, `Π = M · w`.
    pub fn from_finite(prior: &FinitePrior) -> Self {
        let atoms = Arc::new(prior.atoms.clone());
        let m = atoms.len();
        let table: HashMap<u64, f64> = prior
            .atoms
            .iter()
            .zip(&prior.log_weights)
            .map(|(a, lw)| (a.density.key(), lw + (m as f64).ln()))
            .collect();
        let table = Arc::new(table);
        let pick = atoms.clone();
        Self::new(
            move |rng| pick[rng.random_range(0..m)].clone(),
            move |a| table.get(&a.density.key()).copied().unwrap_or(f64::NEG_INFINITY),
        )
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Atom {
        (self.sampler)(rng)
    }

    pub fn log_ratio(&self, atom: &Atom) -> f64 {
        (self.log_ratio)(atom)
    }
}

/// Tuning constants `(c, β, λ = (1 + c) β, γ)` and the test family.
#[derive(Debug, Clone)]
pub struct PosteriorConfig {
    pub c: f64,
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub family: TestFamily,
    /// Diagnostic mode: replaces `λ` by 0 in the inner Gibbs measure.
    pub zero_lambda: bool,
}

impl PosteriorConfig {
    /// Requires `c0 = (1 + c) - c a0/a1 > 0`.
    pub fn new(family: TestFamily, c: f64, beta: f64, gamma: f64) -> Result<Self> {
        if !(c > 0.0 && beta > 0.0 && gamma > 0.0) {
            return arg("c, beta and gamma must be positive");
        }
        let c0 = crate::constants::c0_of(family.a0, family.a1, c);
        if !(c0 > 0.0) {
            return Err(Error::Infeasible(format!(
                "c0 = {c0} <= 0 for c = {c} and a0/a1 = {}",
                family.a0 / family.a1
            )));
        }
        Ok(Self {
            c,
            beta,
            lambda: (1.0 + c) * beta,
            gamma,
            family,
            zero_lambda: false,
        })
    }

    pub fn c0(&self) -> f64 {
        crate::constants::c0_of(self.family.a0, self.family.a1, self.c)
    }

    pub fn with_zero_lambda(mut self) -> Self {
        self.zero_lambda = true;
        self
    }

    fn inner_lambda(&self) -> f64 {
        if self.zero_lambda {
            0.0
        } else {
            self.lambda
        }
    }

    pub fn summary(&self) -> ConfigSummary {
        ConfigSummary {
            family: self.family.name().to_string(),
            a0: self.family.a0,
            a1: self.family.a1,
            a2: self.family.a2,
            tau: self.family.tau,
            c: self.c,
            c0: self.c0(),
            beta: self.beta,
            lambda: self.lambda,
            gamma: self.gamma,
            zero_lambda: self.zero_lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub family: String,
    pub a0: f64,
    pub a1: f64,
    pub a2: Option<f64>,
    pub tau: f64,
    pub c: f64,
    pub c0: f64,
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub zero_lambda: bool,
}

fn check_dim(x: &Dataset, d: &Density) -> Result<()> {
    if d.dim() != x.dim() {
        return arg(format!("data dimension {} but model dimension {}", x.dim(), d.dim()));
    }
    Ok(())
}

/// `log p(X_i)` for every observation.
pub fn log_density_row(x: &Dataset, d: &Density) -> Vec<f64> {
    match x.as_1d() {
        Some(xs) => xs.iter().map(|&v| d.ln_pdf1(v)).collect(),
        None => x.iter().map(|p| d.ln_pdf(p)).collect(),
    }
}

fn t_from_rows(family: &TestFamily, p: &Density, q: &Density, lp: &[f64], lq: &[f64]) -> Result<f64> {
    let pair = family.pair(p, q)?;
    let mut s = 0.0;
    for (a, b) in lp.iter().zip(lq) {
        s += family.stat_from_logs(*a, *b, &pair)?;
    }
    Ok(s)
}

/// `T(X, P, Q) = Σ_i t_(P,Q)(X_i)`.
pub fn pairwise_t(x: &Dataset, p: &Density, q: &Density, family: &TestFamily) -> Result<f64> {
    check_dim(x, p)?;
    check_dim(x, q)?;
    t_from_rows(family, p, q, &log_density_row(x, p), &log_density_row(x, q))
}

/// The antisymmetric `M × M` table of `T(X, P_a, P_b)`, row-major.
///
/// Only the upper triangle is computed; rows are filled in parallel and each
/// entry is a sequential sum over the data, so the table does not depend on
/// the number of workers.
pub fn t_matrix(x: &Dataset, atoms: &[&Density], family: &TestFamily) -> Result<Vec<f64>> {
    for d in atoms {
        check_dim(x, d)?;
    }
    let m = atoms.len();
    let rows: Vec<Vec<f64>> = atoms.par_iter().map(|d| log_density_row(x, d)).collect();
    let upper: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|a| {
            (a + 1..m)
                .map(|b| t_from_rows(family, atoms[a], atoms[b], &rows[a], &rows[b]))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut t = vec![0.0; m * m];
    for (a, row) in upper.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            let b = a + 1 + k;
            t[a * m + b] = *v;
            t[b * m + a] = -*v;
        }
    }
    Ok(t)
}

/// `Σ_Q T_Q softmax(λ T_Q + log w_Q)` for one row of scores.
pub fn gibbs_average(t_row: &[f64], log_w: &[f64], lambda: f64) -> f64 {
    let logits: Vec<f64> = t_row
        .iter()
        .zip(log_w)
        .map(|(t, lw)| {
            if *lw == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                lambda * t + lw
            }
        })
        .collect();
    let z = logsumexp(&logits);
    if !z.is_finite() {
        return f64::NAN;
    }
    t_row
        .iter()
        .zip(&logits)
        .filter(|(_, l)| **l > f64::NEG_INFINITY)
        .map(|(t, l)| t * (l - z).exp())
        .sum()
}

/// `T(X, P)` under a finite prior.
pub fn inner_gibbs_t(x: &Dataset, p: &Density, prior: &FinitePrior, config: &PosteriorConfig) -> Result<f64> {
    let row = prior
        .atoms
        .iter()
        .map(|q| pairwise_t(x, p, &q.density, &config.family))
        .collect::<Result<Vec<f64>>>()?;
    Ok(gibbs_average(&row, &prior.log_weights, config.inner_lambda()))
}

/// Posterior over a finite prior together with the inner averages.
#[derive(Debug, Clone)]
pub struct PosteriorFit {
    pub posterior: FinitePrior,
    /// `T(X, P)` for every atom.
    pub inner: Vec<f64>,
}

/// Exact posterior for a finite prior; cost `O(M² n)` statistic evaluations.
pub fn posterior_fit(x: &Dataset, prior: &FinitePrior, config: &PosteriorConfig) -> Result<PosteriorFit> {
    let m = prior.len();
    let t = t_matrix(x, &prior.densities(), &config.family)?;
    let lambda = config.inner_lambda();
    let inner: Vec<f64> = (0..m)
        .map(|a| gibbs_average(&t[a * m..(a + 1) * m], &prior.log_weights, lambda))
        .collect();
    let lw: Vec<f64> = prior
        .log_weights
        .iter()
        .zip(&inner)
        .map(|(lw, ti)| {
            if *lw == f64::NEG_INFINITY {
                *lw
            } else {
                lw - config.beta * ti
            }
        })
        .collect();
    if lw.iter().any(|v| v.is_nan()) {
        return Err(Error::DegenerateWeights);
    }
    let posterior = FinitePrior::from_log_weights(prior.atoms.clone(), lw).map_err(|_| Error::DegenerateWeights)?;
    Ok(PosteriorFit { posterior, inner })
}

/// Exact posterior for a finite prior.
pub fn posterior_finite(x: &Dataset, prior: &FinitePrior, config: &PosteriorConfig) -> Result<FinitePrior> {
    Ok(posterior_fit(x, prior, config)?.posterior)
}

/// `i.i.d.` categorical draws of atom indices from a finite distribution.
pub fn sample_indices(dist: &FinitePrior, draws: usize, seed: u64) -> Vec<usize> {
    let w = dist.weights();
    let idx = WeightedIndex::new(&w).expect("normalized weights are valid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..draws).map(|_| idx.sample(&mut rng)).collect()
}

/// Draws from the exact posterior of a finite prior.
pub fn sample_posterior(
    x: &Dataset,
    prior: &FinitePrior,
    config: &PosteriorConfig,
    draws: usize,
    seed: u64,
) -> Result<Vec<Atom>> {
    let post = posterior_finite(x, prior, config)?;
    Ok(sample_indices(&post, draws, seed)
        .into_iter()
        .map(|i| post.atoms[i].clone())
        .collect())
}

/// Seed of the `i`-th independent stream derived from `seed`.
pub fn split_seed(seed: u64, i: u64) -> u64 {
    // splitmix64 finalizer over (seed, i)
    let mut z = seed ^ i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Self-normalized outer sample of the posterior.
#[derive(Debug, Clone)]
pub struct McPosterior {
    /// Outer atoms `P_1, …, P_N` drawn from `ν`, with normalized log-weights.
    pub sample: FinitePrior,
    /// Inner estimates `W_i`.
    pub inner: Vec<f64>,
    pub n_inner: usize,
    pub seed: u64,
}

impl McPosterior {
    /// Importance resampling from the outer sample. Carries an `O(1/N)` bias.
    pub fn resample(&self, draws: usize, seed: u64) -> Vec<Atom> {
        sample_indices(&self.sample, draws, seed)
            .into_iter()
            .map(|i| self.sample.atoms[i].clone())
            .collect()
    }
}

struct RowMemo<'a> {
    x: &'a Dataset,
    rows: HashMap<u64, Arc<Vec<f64>>>,
}

impl RowMemo<'_> {
    fn row(&mut self, d: &Density) -> Arc<Vec<f64>> {
        let x = self.x;
        self.rows
            .entry(d.key())
            .or_insert_with(|| Arc::new(log_density_row(x, d)))
            .clone()
    }
}

/// The outer sample of the nested estimator.
///
/// Each outer atom gets its own stream of `N'` inner atoms; repeated atoms
/// inside one stream reuse their log-density row and score.
pub fn posterior_mc(
    x: &Dataset,
    prior: &SampledPrior,
    config: &PosteriorConfig,
    n_outer: usize,
    n_inner: usize,
    seed: u64,
) -> Result<McPosterior> {
    if n_outer < 2 || n_inner < 2 {
        return arg("N and N' must be at least 2");
    }
    let lambda = config.inner_lambda();
    let family = &config.family;
    let outer: Vec<(Atom, f64, f64)> = (0..n_outer)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, i as u64));
            let p = prior.draw(&mut rng);
            check_dim(x, &p.density)?;
            let lp_ratio = prior.log_ratio(&p);
            let mut memo = RowMemo {
                x,
                rows: HashMap::new(),
            };
            let prow = memo.row(&p.density);
            let mut scores: HashMap<u64, f64> = HashMap::new();
            let mut ts = Vec::with_capacity(n_inner);
            let mut lws = Vec::with_capacity(n_inner);
            for _ in 0..n_inner {
                let q = prior.draw(&mut rng);
                let key = q.density.key();
                let t = match scores.get(&key) {
                    Some(t) => *t,
                    None => {
                        check_dim(x, &q.density)?;
                        let qrow = memo.row(&q.density);
                        let t = t_from_rows(family, &p.density, &q.density, &prow, &qrow)?;
                        scores.insert(key, t);
                        t
                    }
                };
                ts.push(t);
                lws.push(prior.log_ratio(&q));
            }
            let w = gibbs_average(&ts, &lws, lambda);
            Ok((p, lp_ratio, w))
        })
        .collect::<Result<_>>()?;

    let mut atoms = Vec::with_capacity(n_outer);
    let mut lw = Vec::with_capacity(n_outer);
    let mut inner = Vec::with_capacity(n_outer);
    for (p, lr, w) in outer {
        let v = if lr == f64::NEG_INFINITY || w.is_nan() {
            f64::NEG_INFINITY
        } else {
            lr - config.beta * w
        };
        atoms.push(p);
        lw.push(v);
        inner.push(w);
    }
    if lw.iter().all(|v| *v == f64::NEG_INFINITY) || lw.iter().any(|v| v.is_nan()) {
        return Err(Error::DegenerateWeights);
    }
    let sample = FinitePrior::from_log_weights(atoms, lw).map_err(|_| Error::DegenerateWeights)?;
    Ok(McPosterior {
        sample,
        inner,
        n_inner,
        seed,
    })
}

/// Monte-Carlo estimate of a posterior functional with its bootstrap error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    /// Bootstrap standard error over the outer atoms.
    pub se: f64,
    /// Effective sample size of the outer weights.
    pub ess: f64,
}

/// Number of bootstrap resamples used for [`McEstimate::se`].
pub const BOOTSTRAP_REPS: usize = 400;

/// `Î_{N,N'} = Σ_i F(P_i) ω_i` with bootstrap standard error.
pub fn posterior_functional_mc(
    x: &Dataset,
    f: impl Fn(&Atom) -> f64 + Sync,
    prior: &SampledPrior,
    config: &PosteriorConfig,
    n_outer: usize,
    n_inner: usize,
    seed: u64,
) -> Result<McEstimate> {
    let mc = posterior_mc(x, prior, config, n_outer, n_inner, seed)?;
    let fs: Vec<f64> = mc.sample.atoms.iter().map(&f).collect();
    Ok(functional_with_bootstrap(
        &fs,
        &mc.sample.log_weights,
        split_seed(seed, u64::MAX),
    ))
}

/// Weighted mean of `fs` under `log_w` and its bootstrap standard error.
pub fn functional_with_bootstrap(fs: &[f64], log_w: &[f64], seed: u64) -> McEstimate {
    let est = |idx: &mut dyn Iterator<Item = usize>| -> f64 {
        let (mut lw, mut fv) = (Vec::new(), Vec::new());
        for i in idx {
            lw.push(log_w[i]);
            fv.push(fs[i]);
        }
        let z = logsumexp(&lw);
        if !z.is_finite() {
            return f64::NAN;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (l, v) in lw.iter().zip(&fv) {
            let w = (l - z).exp();
            num += w * v;
            den += w;
        }
        num / den
    };
    let n = fs.len();
    let value = est(&mut (0..n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reps = Vec::with_capacity(BOOTSTRAP_REPS);
    for _ in 0..BOOTSTRAP_REPS {
        let draw: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let v = est(&mut draw.into_iter());
        if v.is_finite() {
            reps.push(v);
        }
    }
    let mean = reps.iter().sum::<f64>() / reps.len().max(1) as f64;
    let var = reps.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps.len().max(2) - 1) as f64;
    let ess = 1.0 / log_w.iter().map(|l| (2.0 * l).exp()).sum::<f64>();
    McEstimate {
        value,
        se: var.sqrt(),
        ess,
    }
}

/// Serialized form of a posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub atoms: Vec<Vec<f64>>,
    pub log_weights: Vec<f64>,
    pub config: ConfigSummary,
    pub seed: Option<u64>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub ess: f64,
    pub max_weight: f64,
}

impl PosteriorReport {
    pub fn new(posterior: &FinitePrior, config: &PosteriorConfig, seed: Option<u64>) -> Self {
        Self {
            atoms: posterior.atoms.iter().map(|a| a.tag.clone()).collect(),
            log_weights: posterior.log_weights.clone(),
            config: config.summary(),
            seed,
            diagnostics: Diagnostics {
                ess: posterior.ess(),
                max_weight: posterior.max_weight(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
