//! Bahadur-Kiefer remainders and their rate of decay.
//!
//! For a sample `X_1..X_n` with continuous marginal `F` (density `f`,
//! quantile `Q`) and `U_i = F(X_i)`, the general remainder is
//! `sup_y |f(Q(y)) q_n(y) - alpha_n(y)|` and the uniform (Kiefer) remainder
//! is `sup_y |gamma_n(y) - alpha_n(y)|`. Between consecutive points of
//! `{i/n} U {U_(i)}` the uniform difference is affine with slope `2 sqrt(n)`
//! and the general one has slope `sqrt(n) (2 + f'(Q)/f(Q) (Q - X_(k)))`,
//! positive wherever `|f'/f (Q - X_(k))| < 2`, i.e. everywhere outside the
//! extreme tails. The suprema are therefore taken over one-sided limits at
//! those points.

use serde::{Deserialize, Serialize};

use crate::empirical::{self, quantile_rank, SortedSample};
use crate::error::{Error, Result};
use crate::garch::PathSample;
use crate::law::{Law, StandardUniform};
use crate::marginal::{self, MarginalModel};

/// Default working interval `[y0, y1]` for the general remainder.
pub const DEFAULT_INTERVAL: (f64, f64) = (0.05, 0.95);

/// Normalizing sequences at sample size `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    pub n: usize,
    /// `n^{-1/4} (log n)^{1/2} (log log n)^{1/4}`, the remainder rate.
    pub r_n: f64,
    /// `n^{-3/4} (log n)^{1/2} (log log n)^{1/4}`.
    pub b_n: f64,
    /// `n^{-1/2} b_n`.
    pub b_n_star: f64,
    /// `n^{-1/2} (2 log log n)^{1/2}`.
    pub lambda_n: f64,
}

impl RateConstants {
    pub fn new(n: usize) -> Result<Self> {
        if n < 16 {
            return Err(Error::InvalidArgument(format!("rate constants need n >= 16, got {n}")));
        }
        let nf = n as f64;
        let log = nf.ln();
        let loglog = log.ln();
        let logs = log.sqrt() * loglog.powf(0.25);
        let b_n = nf.powf(-0.75) * logs;
        Ok(Self {
            n,
            r_n: nf.powf(-0.25) * logs,
            b_n,
            b_n_star: b_n / nf.sqrt(),
            lambda_n: (2.0 * loglog / nf).sqrt(),
        })
    }
}

/// Remainder statistics of one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BkResult {
    pub n: usize,
    pub seed: u64,
    /// `sup_{[0,1]} |gamma_n - alpha_n|`.
    pub r_uniform: f64,
    /// `sup |f(Q) q_n - alpha_n|` over the working interval.
    pub r_general: f64,
    /// The same supremum over all of `(0, 1)`.
    pub r_general_full: f64,
    /// `sup_x |beta_n(x)|`.
    pub sup_beta: f64,
    /// Lattice oscillation of the uniform empirical process.
    pub oscillation: f64,
    /// `(log log n)^{-1/2} sup |beta_n|`.
    pub lil: f64,
}

fn check_interval(interval: (f64, f64)) -> Result<()> {
    let (y0, y1) = interval;
    if !(y0 > 0.0 && y0 < y1 && y1 < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "working interval must satisfy 0 < y0 < y1 < 1, got [{y0}, {y1}]"
        )));
    }
    Ok(())
}

/// Remainder statistics of a path against its marginal model.
pub fn bk_remainder(path: &PathSample, marginal: &MarginalModel, interval: (f64, f64)) -> Result<BkResult> {
    marginal::check_compatible(path, marginal)?;
    bk_statistics(&path.x, marginal, interval, path.seed)
}

/// Remainder statistics of a raw sample against an explicit law.
pub fn bk_statistics<L: Law>(x: &[f64], law: &L, interval: (f64, f64), seed: u64) -> Result<BkResult> {
    check_interval(interval)?;
    let n = x.len();
    if n < 16 {
        return Err(Error::InsufficientData(format!("remainders need n >= 16, got {n}")));
    }
    let sample = SortedSample::from_slice(x)?;
    let xs = sample.values();
    let us: Vec<f64> = xs.iter().map(|&v| law.cdf(v)).collect();

    let r_uniform = uniform_remainder(&us);
    let r_general = general_remainder(xs, &us, law, interval);
    let r_general_full = general_remainder(xs, &us, law, (0.0, 1.0));
    let uniform_sample = SortedSample::from_slice(&us)?;
    let sup_beta = (n as f64).sqrt() * empirical::ks_distance(&uniform_sample, &StandardUniform);
    let oscillation = empirical::oscillation_uniform(&us, n)?;
    let lil = empirical::lil_normalize(sup_beta, n)?;
    Ok(BkResult { n, seed, r_uniform, r_general, r_general_full, sup_beta, oscillation, lil })
}

/// Consecutive distinct points of a sorted list.
fn segments(points: &[f64]) -> impl Iterator<Item = (f64, f64)> + '_ {
    points.windows(2).filter(|w| w[0] < w[1]).map(|w| (w[0], w[1]))
}

fn merge_sorted(a: impl Iterator<Item = f64>, b: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = a.chain(b.iter().copied()).collect();
    out.sort_by(f64::total_cmp);
    out
}

/// `sup_{y in [0,1]} |gamma_n(y) - alpha_n(y)|` for a sorted uniform sample.
pub fn uniform_remainder(u_sorted: &[f64]) -> f64 {
    let n = u_sorted.len();
    let nf = n as f64;
    let rn = nf.sqrt();
    let points = merge_sorted((0..=n).map(|i| i as f64 / nf), u_sorted);
    let mut sup: f64 = 0.0;
    for (a, b) in segments(&points) {
        let mid = 0.5 * (a + b);
        let count = u_sorted.partition_point(|&v| v <= mid) as f64;
        let g = u_sorted[quantile_rank(n, mid) - 1];
        // gamma_n - alpha_n = sqrt(n) (2y - G_n(y) - E_n(y))
        let d = |y: f64| rn * (2.0 * y - g - count / nf);
        sup = sup.max(d(a).abs()).max(d(b).abs());
    }
    sup
}

/// `sup_{y in interval} |f(Q(y)) q_n(y) - alpha_n(y)|`.
///
/// `x_sorted` are the order statistics and `u_sorted[i] = F(x_sorted[i])`.
/// At `y = U_(i)` the quantile is read off as `Q(U_(i)) = X_(i)`; at the
/// remaining points it comes from `law`. Where `Q` is infinite (the ends of
/// an unbounded support) the density-weighted term takes its limit `0`.
pub fn general_remainder<L: Law>(x_sorted: &[f64], u_sorted: &[f64], law: &L, interval: (f64, f64)) -> f64 {
    let n = x_sorted.len();
    let nf = n as f64;
    let rn = nf.sqrt();
    let (y0, y1) = interval;

    let mut points: Vec<(f64, f64)> = Vec::with_capacity(2 * n + 2);
    points.push((y0, law.quantile(y0)));
    points.push((y1, law.quantile(y1)));
    let first = (y0 * nf).floor() as usize;
    let last = ((y1 * nf).ceil() as usize).min(n);
    for i in first..=last {
        let y = i as f64 / nf;
        if y > y0 && y < y1 {
            points.push((y, law.quantile(y)));
        }
    }
    for (&u, &x) in u_sorted.iter().zip(x_sorted) {
        if u > y0 && u < y1 {
            points.push((u, x));
        }
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    points.dedup_by(|b, a| a.0 == b.0);

    let mut sup: f64 = 0.0;
    for w in points.windows(2) {
        let ((a, qa), (b, qb)) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let count = u_sorted.partition_point(|&v| v <= mid) as f64;
        let xk = x_sorted[quantile_rank(n, mid) - 1];
        let d = |y: f64, q: f64| {
            let weighted = if q.is_finite() { law.pdf(q) * rn * (q - xk) } else { 0.0 };
            weighted - rn * (count / nf - y)
        };
        sup = sup.max(d(a, qa).abs()).max(d(b, qb).abs());
    }
    sup
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    quantile_linear(values, 0.5)
}

/// Sample quantile with linear interpolation between order statistics
/// (position `p (n - 1)`).
pub fn quantile_linear(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub n: usize,
    pub value: f64,
    pub r_n: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Least-squares slope of `log value` on `log n`.
    pub exponent: f64,
    pub intercept: f64,
    pub ratios: Vec<RatioRow>,
}

/// Least-squares line through `(log n, log value)`; needs two distinct `n`.
pub fn log_log_fit(points: &[(usize, f64)]) -> Result<(f64, f64)> {
    if let Some((_, v)) = points.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidArgument(format!("log-log fit needs positive values, got {v}")));
    }
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("log-log fit needs at least two distinct n".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Rate exponent of per-`n` summaries (medians) and their ratios to `r_n`.
pub fn rate_fit(results: &[(usize, f64)]) -> Result<RateFit> {
    let mut distinct: Vec<usize> = results.iter().map(|(n, _)| *n).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "rate fit needs at least 3 distinct n, got {}",
            distinct.len()
        )));
    }
    let (exponent, intercept) = log_log_fit(results)?;
    let ratios = results
        .iter()
        .map(|&(n, value)| {
            let r_n = RateConstants::new(n)?.r_n;
            Ok(RatioRow { n, value, r_n, ratio: value / r_n })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateFit { exponent, intercept, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::garch::{self, GarchParams};
    use crate::innovations::InnovationModel;
    use crate::law::Scaled;
    use crate::rng;
    use rand::Rng;

    fn uniforms(seed: u64, n: usize) -> Vec<f64> {
        let mut r = rng::stream(seed);
        let mut v: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Independent oracle: both one-sided limits of gamma_n - alpha_n at
    /// every jump point, with E_n and G_n recomputed by direct counting.
    fn brute_uniform(u: &[f64]) -> f64 {
        let n = u.len();
        let nf = n as f64;
        let e_le = |y: f64| u.iter().filter(|&&v| v <= y).count() as f64 / nf;
        let e_lt = |y: f64| u.iter().filter(|&&v| v < y).count() as f64 / nf;
        // G_n(y) = U_(k) with k the smallest index such that k/n >= y
        let g_at = |y: f64| {
            let k = (1..=n).find(|&k| k as f64 / nf >= y).unwrap_or(n);
            u[k - 1]
        };
        let g_after = |i: usize| u[(i + 1).min(n) - 1];
        let mut sup: f64 = 0.0;
        let mut eval = |y: f64, g: f64, e: f64| sup = sup.max((nf.sqrt() * (2.0 * y - g - e)).abs());
        for i in 0..=n {
            let y = i as f64 / nf;
            if i >= 1 {
                eval(y, u[i - 1], e_lt(y));
                eval(y, u[i - 1], e_le(y));
            }
            if i < n {
                eval(y, g_after(i), e_le(y));
            }
        }
        for &v in u {
            eval(v, g_at(v), e_lt(v));
            eval(v, g_at(v), e_le(v));
        }
        sup
    }

    #[test]
    fn rate_constants() {
        let rc = RateConstants::new(16).unwrap();
        // log 16 = 2.772588722239781, log log 16 = 1.0197814018...
        let ll = 16f64.ln().ln();
        assert!((ll - 1.019_781_441_3).abs() < 1e-9);
        let expect_r = 0.5 * 2.772_588_722_239_781f64.sqrt() * ll.powf(0.25);
        assert!((rc.r_n - expect_r).abs() < 1e-14);
        assert!(rc.b_n > 0.0 && rc.b_n_star > 0.0 && rc.lambda_n > 0.0);
        assert!(RateConstants::new(15).is_err());
        let mut prev = f64::INFINITY;
        for n in (16..100_000).step_by(97) {
            let rc = RateConstants::new(n).unwrap();
            assert!((rc.r_n / rc.b_n - (n as f64).sqrt()).abs() < 1e-9 * (n as f64).sqrt());
            assert!(rc.r_n < prev);
            prev = rc.r_n;
        }
    }

    #[test]
    fn uniform_remainder_matches_brute_force() {
        for seed in 0..60 {
            let n = 1 + (seed as usize * 53) % 400;
            let u = uniforms(seed, n);
            let fast = uniform_remainder(&u);
            let slow = brute_uniform(&u);
            assert!((fast - slow).abs() < 1e-12, "seed {seed}: {fast} vs {slow}");
        }
    }

    #[test]
    fn dense_grid_never_exceeds_candidate_supremum() {
        let n = 2000;
        let u = uniforms(8, n);
        let sup = uniform_remainder(&u);
        let s = SortedSample::from_slice(&u).unwrap();
        let m = 10 * n;
        let mut grid_sup: f64 = 0.0;
        for j in 1..m {
            let y = j as f64 / m as f64;
            let v = (n as f64).sqrt() * (2.0 * y - s.equantile(y).unwrap() - s.ecdf(y));
            grid_sup = grid_sup.max(v.abs());
        }
        assert!(grid_sup <= sup + 1e-12);
        // slope of the difference is 2 sqrt(n); a grid of step h misses at most that times h
        assert!(grid_sup >= sup - 2.0 * (n as f64).sqrt() / m as f64 - 1e-12);
    }

    #[test]
    fn plug_in_sample_has_small_general_remainder() {
        let n = 4096;
        let h = InnovationModel::gaussian();
        let x: Vec<f64> = (1..=n).map(|i| h.quantile(i as f64 / (n + 1) as f64)).collect();
        let r = bk_statistics(&x, &h, DEFAULT_INTERVAL, 0).unwrap();
        let rc = RateConstants::new(n).unwrap();
        assert!(r.r_general < 0.05 * rc.r_n, "{} vs {}", r.r_general, rc.r_n);
        assert!(r.r_general <= 2.0 / (n as f64).sqrt());
    }

    #[test]
    fn general_remainder_is_scale_invariant() {
        let params = GarchParams::new(0.1, vec![0.8], vec![0.1]).unwrap();
        let h = InnovationModel::gaussian();
        let m = crate::marginal::build_marginal(&params, &h, 10_000, 10, 1).unwrap();
        let path = garch::simulate(&params, &h, 3000, 1000, 2).unwrap();
        let base = bk_statistics(&path.x, &m, DEFAULT_INTERVAL, 2).unwrap();
        let c = 3.7;
        let mc = m.scaled(c).unwrap();
        let xc: Vec<f64> = path.x.iter().map(|x| c * x).collect();
        let scaled = bk_statistics(&xc, &mc, DEFAULT_INTERVAL, 2).unwrap();
        assert!((base.r_general - scaled.r_general).abs() < 1e-10);
        assert!((base.r_uniform - scaled.r_uniform).abs() < 1e-10);
    }

    #[test]
    fn monotone_transform_leaves_uniform_statistics_identical() {
        let n = 1000;
        let h = InnovationModel::gaussian();
        let x = h.sample(6, n);
        let a = bk_statistics(&x, &h, DEFAULT_INTERVAL, 0).unwrap();
        // x -> 2x is exact in floating point, so U is bit-identical
        let law = Scaled { inner: h.clone(), scale: 2.0 };
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let b = bk_statistics(&x2, &law, DEFAULT_INTERVAL, 0).unwrap();
        assert_eq!(a.r_uniform.to_bits(), b.r_uniform.to_bits());
        assert_eq!(a.sup_beta.to_bits(), b.sup_beta.to_bits());
    }

    #[test]
    fn triangle_bound_holds() {
        let h = InnovationModel::gaussian();
        for seed in 0..20 {
            let n = 500;
            let x = h.sample(seed, n);
            let r = bk_statistics(&x, &h, DEFAULT_INTERVAL, seed).unwrap();
            let s = SortedSample::from_slice(&x).unwrap();
            let mut sup_fq: f64 = 0.0;
            for i in 1..n {
                let y = i as f64 / n as f64;
                let q = h.quantile(y);
                for k in [i, i + 1] {
                    sup_fq = sup_fq.max((h.pdf(q) * (n as f64).sqrt() * (q - s.order_stat(k))).abs());
                }
            }
            for &v in s.values() {
                let u = h.cdf(v);
                let k = quantile_rank(n, u);
                sup_fq = sup_fq.max((h.pdf(v) * (n as f64).sqrt() * (v - s.order_stat(k))).abs());
            }
            assert!(r.r_general_full <= sup_fq + r.sup_beta + 1e-9);
            assert!(r.r_general <= r.r_general_full + 1e-12);
        }
    }

    #[test]
    fn bk_remainder_rejects_mismatch() {
        let params = GarchParams::new(0.1, vec![0.8], vec![0.1]).unwrap();
        let h = InnovationModel::gaussian();
        let m = crate::marginal::build_marginal(&params, &h, 10_000, 5, 1).unwrap();
        let other = GarchParams::new(0.1, vec![0.7], vec![0.1]).unwrap();
        let path = garch::simulate(&other, &h, 100, 10, 2).unwrap();
        assert!(matches!(bk_remainder(&path, &m, DEFAULT_INTERVAL), Err(Error::Mismatch(_))));
        let path = garch::simulate(&params, &h, 10, 10, 2).unwrap();
        assert!(bk_remainder(&path, &m, DEFAULT_INTERVAL).is_err());
        let path = garch::simulate(&params, &h, 100, 10, 2).unwrap();
        assert!(bk_remainder(&path, &m, (0.5, 0.4)).is_err());
        assert!(bk_remainder(&path, &m, DEFAULT_INTERVAL).is_ok());
    }

    #[test]
    fn fit_of_exact_power_law() {
        let pts: Vec<(usize, f64)> = [1000usize, 4000, 16000, 64000]
            .iter()
            .map(|&n| (n, 3.0 * (n as f64).powf(-0.5)))
            .collect();
        let fit = rate_fit(&pts).unwrap();
        assert!((fit.exponent + 0.5).abs() < 1e-9);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn fit_of_rate_sequence_tracks_its_local_slope() {
        let ns = [4096usize, 16384, 65536];
        let pts: Vec<(usize, f64)> = ns.iter().map(|&n| (n, 0.7 * RateConstants::new(n).unwrap().r_n)).collect();
        let fit = rate_fit(&pts).unwrap();
        // d log r_n / d log n = -1/4 + 1/(2 log n) + 1/(4 log n log log n)
        let l = (16384f64).ln();
        let local = -0.25 + 0.5 / l + 0.25 / (l * l.ln());
        assert!((fit.exponent - local).abs() < 0.02, "{} vs {local}", fit.exponent);
        for row in &fit.ratios {
            assert!((row.ratio - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_errors() {
        assert!(rate_fit(&[(100, 1.0), (100, 2.0), (100, 3.0)]).is_err());
        assert!(rate_fit(&[(100, 1.0), (200, 2.0)]).is_err());
        assert!(rate_fit(&[(100, 1.0), (200, 0.0), (300, 1.0)]).is_err());
        assert!(log_log_fit(&[(100, 1.0), (200, 2.0)]).is_ok());
    }

    #[test]
    fn medians_and_quartiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(quantile_linear(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
        assert!(median(&[]).is_nan());
    }
}
