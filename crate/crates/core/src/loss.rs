//! Losses between densities: total variation, squared Hellinger and L_j.

use serde::{Deserialize, Serialize};

use crate::density::{common_points, std_normal_cdf, Density, MixtureMeasure, TAIL_MASS};
use crate::error::{arg, Error, Result};
use crate::quad::{self, QuadOptions};

/// Nodes per axis for product quadrature on boxes.
pub const BOX_NODES: usize = 256;

/// Which loss, with its quasi-triangle constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    Tv,
    HellingerSq,
    Lj { j: f64, r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub tau: f64,
}

impl LossSpec {
    pub fn tv() -> Self {
        Self {
            kind: LossKind::Tv,
            tau: 1.0,
        }
    }

    pub fn hellinger_sq() -> Self {
        Self {
            kind: LossKind::HellingerSq,
            tau: 2.0,
        }
    }

    pub fn lj(j: f64, r: f64) -> Self {
        Self {
            kind: LossKind::Lj { j, r },
            tau: 1.0,
        }
    }

    pub fn eval(&self, p: &Density, q: &Density) -> Result<f64> {
        match self.kind {
            LossKind::Tv => tv_distance(p, q),
            LossKind::HellingerSq => hellinger_sq(p, q),
            LossKind::Lj { j, .. } => lj_loss(p, q, j),
        }
    }
}

/// Sign of `q - p` on a piece of the line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `q > p`
    Q,
    /// `p > q`
    P,
    Tie,
}

/// An interval on which the comparison between two densities is constant.
#[derive(Debug, Clone, Copy)]
pub struct Piece {
    pub a: f64,
    pub b: f64,
    pub side: Side,
}

fn side_at(p: &Density, q: &Density, x: f64) -> Side {
    let (lp, lq) = (p.ln_pdf1(x), q.ln_pdf1(x));
    if lq > lp {
        Side::Q
    } else if lp > lq {
        Side::P
    } else {
        Side::Tie
    }
}

const PARTITION_SAMPLES: usize = 32;

/// Splits the common effective range of two 1-D densities into intervals on
/// which `q > p`, `p > q` or `p = q` holds throughout.
///
/// Comparisons are strict; ties fall on neither side. Crossings inside each
/// smooth segment are located by sampling and bisection.
pub fn sign_partition(p: &Density, q: &Density) -> Vec<Piece> {
    sign_partition_over(p, q, &[])
}

/// As [`sign_partition`], over a range that also covers the `extra` models.
pub fn sign_partition_over(p: &Density, q: &Density, extra: &[&Density]) -> Vec<Piece> {
    let mut all = vec![p, q];
    all.extend_from_slice(extra);
    let pts = common_points(&all);
    let mut out: Vec<Piece> = Vec::new();
    let mut push = |a: f64, b: f64, side: Side| {
        if b <= a {
            return;
        }
        if let Some(last) = out.last_mut() {
            if last.side == side && last.b == a {
                last.b = b;
                return;
            }
        }
        out.push(Piece { a, b, side });
    };
    for w in pts.windows(2) {
        let (u, v) = (w[0], w[1]);
        if v <= u {
            continue;
        }
        // samples reach both ends, kept just inside so jumps at `u`, `v` do not leak
        let edge = 1e-12;
        let xs: Vec<f64> = (0..PARTITION_SAMPLES)
            .map(|i| {
                let t = i as f64 / (PARTITION_SAMPLES - 1) as f64;
                u + (v - u) * t.clamp(edge, 1.0 - edge)
            })
            .collect();
        let sides: Vec<Side> = xs.iter().map(|x| side_at(p, q, *x)).collect();
        let mut start = u;
        for i in 0..PARTITION_SAMPLES - 1 {
            if sides[i] != sides[i + 1] {
                let (mut a, mut b) = (xs[i], xs[i + 1]);
                for _ in 0..80 {
                    let m = 0.5 * (a + b);
                    if !(m > a && m < b) {
                        break;
                    }
                    if side_at(p, q, m) == sides[i] {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let cut = 0.5 * (a + b);
                push(start, cut, sides[i]);
                start = cut;
            }
        }
        push(start, v, sides[PARTITION_SAMPLES - 1]);
    }
    out
}

/// Masses `(Q(q > p), P(p > q), P(q > p))` from a sign partition.
pub fn comparison_masses(p: &Density, q: &Density) -> (f64, f64, f64) {
    let mut q_gt = 0.0;
    let mut p_gt = 0.0;
    let mut p_on_q = 0.0;
    for piece in sign_partition(p, q) {
        match piece.side {
            Side::Q => {
                q_gt += q.mass1(piece.a, piece.b);
                p_on_q += p.mass1(piece.a, piece.b);
            }
            Side::P => p_gt += p.mass1(piece.a, piece.b),
            Side::Tie => {}
        }
    }
    (q_gt, p_gt, p_on_q)
}

fn check_dims(p: &Density, q: &Density) -> Result<usize> {
    if p.dim() != q.dim() {
        return arg(format!("dimension mismatch: {} vs {}", p.dim(), q.dim()));
    }
    Ok(p.dim())
}

fn union_box(p: &Density, q: &Density) -> (Vec<f64>, Vec<f64>) {
    let (mut lo, mut hi) = p.bounding_box(TAIL_MASS);
    let (lo2, hi2) = q.bounding_box(TAIL_MASS);
    for d in 0..lo.len() {
        lo[d] = lo[d].min(lo2[d]);
        hi[d] = hi[d].max(hi2[d]);
    }
    (lo, hi)
}

/// `|μ_p - μ_q| / σ` for isotropic Gaussians with a common scale.
fn iso_gap(p: &Density, q: &Density) -> Option<f64> {
    match (p, q) {
        (Density::IsoGaussian { mean: a, sigma: s }, Density::IsoGaussian { mean: b, sigma: t })
            if s == t && a.len() == b.len() =>
        {
            Some(a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() / s)
        }
        _ => None,
    }
}

/// Total variation distance `(1/2)∫|p - q|`.
///
/// On the line the sets `{q > p}` are resolved exactly and their masses taken
/// from the distribution functions; on boxes a product rule is used.
pub fn tv_distance(p: &Density, q: &Density) -> Result<f64> {
    if let Some(d) = iso_gap(p, q) {
        return Ok((2.0 * std_normal_cdf(0.5 * d) - 1.0).clamp(0.0, 1.0));
    }
    if check_dims(p, q)? == 1 {
        let (q_gt, _, p_on_q) = comparison_masses(p, q);
        let v = q_gt - p_on_q;
        if !v.is_finite() {
            return Err(Error::Integration { residual: f64::NAN });
        }
        return Ok(v.clamp(0.0, 1.0));
    }
    let (lo, hi) = union_box(p, q);
    let v = quad::integrate_box(|x| 0.5 * (p.pdf(x) - q.pdf(x)).abs(), &lo, &hi, BOX_NODES);
    Ok(v.clamp(0.0, 1.0))
}

/// Total variation distance by adaptive quadrature of `(1/2)|p - q|`.
pub fn tv_distance_quadrature(p: &Density, q: &Density) -> Result<f64> {
    check_dims(p, q)?;
    let pts = common_points(&[p, q]);
    let r = quad::integrate_pieces(|x| 0.5 * (p.pdf1(x) - q.pdf1(x)).abs(), &pts, QuadOptions::default())?;
    Ok(r.value.clamp(0.0, 1.0))
}

/// Squared Hellinger distance `(1/2)∫(√p - √q)²`.
pub fn hellinger_sq(p: &Density, q: &Density) -> Result<f64> {
    if let Some(d) = iso_gap(p, q) {
        return Ok(-(-d * d / 8.0).exp_m1());
    }
    if check_dims(p, q)? == 1 {
        let pts = common_points(&[p, q]);
        let r = quad::integrate_pieces(
            |x| {
                let d = p.pdf1(x).sqrt() - q.pdf1(x).sqrt();
                0.5 * d * d
            },
            &pts,
            QuadOptions::default(),
        )?;
        return Ok(r.value.clamp(0.0, 1.0));
    }
    let (lo, hi) = union_box(p, q);
    let v = quad::integrate_box(
        |x| {
            let d = p.pdf(x).sqrt() - q.pdf(x).sqrt();
            0.5 * d * d
        },
        &lo,
        &hi,
        BOX_NODES,
    );
    Ok(v.clamp(0.0, 1.0))
}

/// The L_j distance `(∫|p - q|^j)^(1/j)`.
pub fn lj_loss(p: &Density, q: &Density, j: f64) -> Result<f64> {
    if !(j > 1.0 && j.is_finite()) {
        return arg("L_j loss needs 1 < j < inf");
    }
    if check_dims(p, q)? == 1 {
        let pts = common_points(&[p, q]);
        let r = quad::integrate_pieces(|x| (p.pdf1(x) - q.pdf1(x)).abs().powf(j), &pts, QuadOptions::default())?;
        return Ok(r.value.max(0.0).powf(1.0 / j));
    }
    let (lo, hi) = union_box(p, q);
    let v = quad::integrate_box(|x| (p.pdf(x) - q.pdf(x)).abs().powf(j), &lo, &hi, BOX_NODES);
    Ok(v.max(0.0).powf(1.0 / j))
}

/// Kullback–Leibler divergence `∫ s log(s / p)`; infinite unless `S ≪ P`.
pub fn kl_divergence(s: &Density, p: &Density) -> Result<f64> {
    check_dims(s, p)?;
    let pts = crate::density::points_within(s, &[p]);
    let mut singular = false;
    let r = quad::integrate_pieces(
        |x| {
            let ls = s.ln_pdf1(x);
            if ls == f64::NEG_INFINITY {
                return 0.0;
            }
            let lp = p.ln_pdf1(x);
            if lp == f64::NEG_INFINITY {
                singular = true;
                return 0.0;
            }
            ls.exp() * (ls - lp)
        },
        &pts,
        QuadOptions::default(),
    )?;
    if singular {
        return Ok(f64::INFINITY);
    }
    Ok(r.value.max(0.0))
}

/// Equal-weight mixture of the marginals.
pub fn average_marginal(marginals: &[Density]) -> Result<MixtureMeasure> {
    if marginals.is_empty() {
        return arg("average of an empty list of marginals");
    }
    let n = marginals.len();
    MixtureMeasure::new(marginals.to_vec(), vec![1.0 / n as f64; n])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_translate_tv() {
        let p = Density::uniform(0.0, 1.0).unwrap();
        let q = Density::uniform(0.3, 1.3).unwrap();
        assert!((tv_distance(&p, &q).unwrap() - 0.3).abs() < 1e-12);
        assert!((tv_distance_quadrature(&p, &q).unwrap() - 0.3).abs() < 1e-8);
    }

    #[test]
    fn identical_arguments_give_zero() {
        let p = Density::gaussian(0.2, 1.3).unwrap();
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        assert!(hellinger_sq(&p, &p).unwrap() < 1e-15);
        assert!(lj_loss(&p, &p, 2.0).unwrap() < 1e-12);
    }

    #[test]
    fn disjoint_supports_hellinger_one() {
        let p = Density::uniform(0.0, 1.0).unwrap();
        let q = Density::uniform(2.0, 3.0).unwrap();
        assert!((hellinger_sq(&p, &q).unwrap() - 1.0).abs() < 1e-9);
        assert!((tv_distance(&p, &q).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_l2_norm() {
        let p = Density::uniform(0.0, 1.0).unwrap();
        for a in [-1.0, -0.3, 0.5, 1.0] {
            let q = Density::trig(a, 0.0, 1).unwrap();
            let v = lj_loss(&p, &q, 2.0).unwrap();
            assert!((v - f64::abs(a) / 2f64.sqrt()).abs() < 1e-8, "a={a}: {v}");
        }
    }

    #[test]
    fn half_interval_l2() {
        let p = Density::uniform(0.0, 1.0).unwrap();
        let q = Density::uniform(0.0, 0.5).unwrap();
        assert!((lj_loss(&p, &q, 2.0).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_hellinger_closed_form() {
        let p = Density::gaussian(0.0, 1.5).unwrap();
        let q = Density::gaussian(1.2, 1.5).unwrap();
        let want = 1.0 - (-(1.2f64 * 1.2) / (8.0 * 2.25)).exp();
        assert!((hellinger_sq(&p, &q).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn iso_gaussian_hellinger_in_two_dims() {
        let p = Density::iso_gaussian(vec![0.0, 0.0], 1.0).unwrap();
        let q = Density::iso_gaussian(vec![0.6, -0.8], 1.0).unwrap();
        let want = 1.0 - (-1.0f64 / 8.0).exp();
        assert!((hellinger_sq(&p, &q).unwrap() - want).abs() < 1e-12);
        let (lo, hi) = union_box(&p, &q);
        let boxed = quad::integrate_box(
            |x| 0.5 * (p.pdf(x).sqrt() - q.pdf(x).sqrt()).powi(2),
            &lo,
            &hi,
            BOX_NODES,
        );
        assert!((boxed - want).abs() < 1e-6);
        let tv = quad::integrate_box(|x| 0.5 * (p.pdf(x) - q.pdf(x)).abs(), &lo, &hi, BOX_NODES);
        assert!((tv_distance(&p, &q).unwrap() - tv).abs() < 1e-4);
    }

    #[test]
    fn power_law_tv_closed_form() {
        for (a, d) in [(0.5, 0.01), (0.5, 0.3), (0.25, 0.7), (1.0, 0.4), (0.5, 1.5)] {
            let p = Density::power_law(a, 0.0).unwrap();
            let q = Density::power_law(a, d).unwrap();
            let want = f64::powf(d, a).min(1.0);
            assert!((tv_distance(&p, &q).unwrap() - want).abs() < 1e-9, "{a} {d}");
        }
    }

    #[test]
    fn uniform_blocks_average_to_uniform() {
        let n = 7;
        let ms: Vec<Density> = (0..n)
            .map(|i| Density::uniform(i as f64 / n as f64, (i + 1) as f64 / n as f64).unwrap())
            .collect();
        let mix = Density::mixture(average_marginal(&ms).unwrap());
        for x in [0.01, 0.2, 0.5, 0.93] {
            assert!((mix.pdf1(x) - 1.0).abs() < 1e-12);
        }
        assert!(average_marginal(&[]).is_err());
    }
}
