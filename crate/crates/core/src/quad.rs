//! Numerical integration: adaptive Gauss–Kronrod on the line and product
//! Gauss–Legendre grids on boxes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tuning for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    /// Target absolute error over the whole domain.
    pub abstol: f64,
    /// Maximum number of live subintervals.
    pub max_intervals: usize,
    /// Residual above which a capped run is reported as a failure.
    pub fail_tol: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abstol: 1e-9,
            max_intervals: 4000,
            fail_tol: 1e-6,
        }
    }
}

/// Integral value with its error estimate.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

struct Seg {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Seg {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Seg {}
impl PartialOrd for Seg {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Seg {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Seg {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let value = kron * h;
    let mut error = ((kron - gauss) * h).abs();
    if !value.is_finite() {
        error = f64::INFINITY;
    }
    Seg { a, b, value, error }
}

/// Integrates `f` over the union of consecutive pieces `[points[i], points[i+1]]`.
///
/// The points must be finite and nondecreasing. The integrand is never
/// evaluated at the points themselves, so jumps placed there are harmless.
pub fn integrate_pieces<F>(mut f: F, points: &[f64], opts: QuadOptions) -> Result<QuadResult>
where
    F: FnMut(f64) -> f64,
{
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument("integration bounds must be finite".into()));
    }
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(gk15(&mut f, w[0], w[1]));
        }
    }
    let mut frozen_value = 0.0;
    let mut frozen_error = 0.0;
    loop {
        let total_err: f64 = frozen_error + heap.iter().map(|s| s.error).sum::<f64>();
        if total_err <= opts.abstol || heap.is_empty() {
            break;
        }
        if heap.len() >= opts.max_intervals {
            break;
        }
        let seg = heap.pop().expect("heap is nonempty");
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) || (seg.b - seg.a) <= 1e-15 * seg.a.abs().max(seg.b.abs()) {
            frozen_value += seg.value;
            frozen_error += seg.error;
            continue;
        }
        heap.push(gk15(&mut f, seg.a, mid));
        heap.push(gk15(&mut f, mid, seg.b));
    }
    let intervals = heap.len();
    let mut parts: Vec<Seg> = heap.into_vec();
    parts.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = frozen_value + parts.iter().map(|s| s.value).sum::<f64>();
    let error = frozen_error + parts.iter().map(|s| s.error).sum::<f64>();
    if !value.is_finite() || error > opts.fail_tol.max(opts.abstol) {
        return Err(Error::Integration { residual: error });
    }
    Ok(QuadResult {
        value,
        error,
        intervals,
    })
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult> {
    integrate_pieces(f, &[a, b], opts)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Product Gauss–Legendre rule on a box, `nodes` points per axis.
pub fn integrate_box<F>(mut f: F, lo: &[f64], hi: &[f64], nodes: usize) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let k = lo.len();
    let (gx, gw) = gauss_legendre(nodes);
    let mut idx = vec![0usize; k];
    let mut pt = vec![0.0; k];
    let half: Vec<f64> = (0..k).map(|d| 0.5 * (hi[d] - lo[d])).collect();
    let mid: Vec<f64> = (0..k).map(|d| 0.5 * (hi[d] + lo[d])).collect();
    let jac: f64 = half.iter().product();
    let mut total = 0.0;
    loop {
        let mut wt = jac;
        for d in 0..k {
            pt[d] = mid[d] + half[d] * gx[idx[d]];
            wt *= gw[idx[d]];
        }
        total += wt * f(&pt);
        let mut d = 0;
        loop {
            if d == k {
                return total;
            }
            idx[d] += 1;
            if idx[d] < nodes {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}
