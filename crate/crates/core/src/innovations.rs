//! Innovation laws driving the volatility recursion.
//!
//! Every model has mean zero, unit variance and a finite fourth moment.
//! Gaussian draws are produced by inverting the normal CDF so that a seed
//! alone determines the stream.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::distr::{Distribution, Open01};
use rand::Rng;
use rand_distr::StudentT;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::law::Law;
use crate::rng;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    StudentT,
}

/// Serialized description of an innovation model, as it appears in
/// experiment configuration files: `{ family = "student_t", df = 5 }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnovationSpec {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
}

impl InnovationSpec {
    pub fn gaussian() -> Self {
        Self { family: Family::Gaussian, df: None }
    }

    pub fn student_t(df: f64) -> Self {
        Self { family: Family::StudentT, df: Some(df) }
    }

    pub fn build(&self) -> Result<InnovationModel> {
        InnovationModel::from_spec(self)
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Gaussian,
    StudentT {
        df: f64,
        /// sqrt((df - 2) / df), maps the standard t law to unit variance.
        scale: f64,
        log_norm: f64,
        sampler: StudentT<f64>,
        reference: StudentsT,
    },
}

/// Law `H` of the innovations, with density `h` and its derivative `h'`.
#[derive(Clone, Debug)]
pub struct InnovationModel {
    kind: Kind,
}

impl PartialEq for InnovationModel {
    fn eq(&self, other: &Self) -> bool {
        self.spec() == other.spec()
    }
}

impl InnovationModel {
    pub fn gaussian() -> Self {
        Self { kind: Kind::Gaussian }
    }

    /// Student-t with `df` degrees of freedom, rescaled to unit variance.
    /// Requires `df > 4` so that the fourth moment is finite.
    pub fn student_t(df: f64) -> Result<Self> {
        if !(df.is_finite() && df > 4.0) {
            return Err(Error::InvalidInnovation(format!(
                "student_t requires df > 4 for a finite fourth moment, got {df}"
            )));
        }
        let log_norm = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * PI).ln();
        let sampler = StudentT::new(df)
            .map_err(|e| Error::InvalidInnovation(format!("student_t: {e}")))?;
        let reference = StudentsT::new(0.0, 1.0, df)
            .map_err(|e| Error::InvalidInnovation(format!("student_t: {e}")))?;
        Ok(Self {
            kind: Kind::StudentT {
                df,
                scale: ((df - 2.0) / df).sqrt(),
                log_norm,
                sampler,
                reference,
            },
        })
    }

    pub fn from_spec(spec: &InnovationSpec) -> Result<Self> {
        match spec.family {
            Family::Gaussian => match spec.df {
                None => Ok(Self::gaussian()),
                Some(df) => Err(Error::InvalidInnovation(format!(
                    "gaussian family takes no df (got {df})"
                ))),
            },
            Family::StudentT => {
                let df = spec.df.ok_or_else(|| {
                    Error::InvalidInnovation("student_t family requires df".into())
                })?;
                Self::student_t(df)
            }
        }
    }

    pub fn spec(&self) -> InnovationSpec {
        match &self.kind {
            Kind::Gaussian => InnovationSpec::gaussian(),
            Kind::StudentT { df, .. } => InnovationSpec::student_t(*df),
        }
    }

    pub fn family(&self) -> Family {
        self.spec().family
    }

    pub fn is_symmetric(&self) -> bool {
        true
    }

    /// One draw from `H`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            Kind::Gaussian => {
                let u: f64 = Open01.sample(rng);
                normal_quantile(u)
            }
            Kind::StudentT { scale, sampler, .. } => scale * sampler.sample(rng),
        }
    }

    /// `n` i.i.d. draws; the same `(model, seed, n)` always gives the same vector.
    pub fn sample(&self, seed: u64, n: usize) -> Vec<f64> {
        let mut rng = rng::stream(seed);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Gaussian => normal_cdf(x),
            Kind::StudentT { scale, reference, .. } => reference.cdf(x / scale),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Gaussian => normal_pdf(x),
            Kind::StudentT { df, scale, log_norm, .. } => {
                let z = x / scale;
                (log_norm - 0.5 * (df + 1.0) * (z * z / df).ln_1p()).exp() / scale
            }
        }
    }

    pub fn pdf_deriv(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Gaussian => -x * normal_pdf(x),
            Kind::StudentT { df, scale, .. } => {
                let z = x / scale;
                -self.pdf(x) * (df + 1.0) * z / ((df + z * z) * scale)
            }
        }
    }

    /// Density and its derivative in one pass.
    pub(crate) fn pdf_and_deriv(&self, x: f64) -> (f64, f64) {
        match &self.kind {
            Kind::Gaussian => {
                let h = normal_pdf(x);
                (h, -x * h)
            }
            Kind::StudentT { df, scale, .. } => {
                let h = self.pdf(x);
                let z = x / scale;
                (h, -h * (df + 1.0) * z / ((df + z * z) * scale))
            }
        }
    }

    pub fn quantile(&self, y: f64) -> f64 {
        match &self.kind {
            Kind::Gaussian => normal_quantile(y),
            Kind::StudentT { scale, reference, .. } => scale * reference.inverse_cdf(y),
        }
    }

    /// `E eps^4`, in closed form.
    pub fn fourth_moment(&self) -> f64 {
        match &self.kind {
            Kind::Gaussian => 3.0,
            Kind::StudentT { df, .. } => 3.0 * (df - 2.0) / (df - 4.0),
        }
    }
}

impl Law for InnovationModel {
    fn cdf(&self, x: f64) -> f64 {
        InnovationModel::cdf(self, x)
    }
    fn pdf(&self, x: f64) -> f64 {
        InnovationModel::pdf(self, x)
    }
    fn quantile(&self, y: f64) -> f64 {
        InnovationModel::quantile(self, y)
    }
}

pub(crate) fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Inverse of the standard normal CDF: Acklam's rational approximation
/// followed by one Halley step against `erfc`.
pub(crate) fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement; Phi(x) - p, written through the survival function
    // in the upper half.
    let e = if p > 0.5 {
        (1.0 - p) - 0.5 * libm::erfc(x * FRAC_1_SQRT_2)
    } else {
        0.5 * libm::erfc(-x * FRAC_1_SQRT_2) - p
    };
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let s = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, s)
    }

    /// Adaptive Simpson quadrature; test-only oracle.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let diff = left + right - whole;
            if depth == 0 || diff.abs() <= 15.0 * tol {
                left + right + diff / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 40)
    }

    #[test]
    fn gaussian_sample_moments() {
        let v = InnovationModel::gaussian().sample(1, 1_000_000);
        let (m, s) = mean_var(&v);
        assert!(m.abs() < 0.005, "mean {m}");
        assert!((s - 1.0).abs() < 0.01, "variance {s}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = InnovationModel::gaussian();
        assert_eq!(g.sample(99, 1000), g.sample(99, 1000));
        let t = InnovationModel::student_t(6.5).unwrap();
        let a = t.sample(3, 500);
        let b = t.sample(3, 500);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn student_t_sample_variance() {
        let t = InnovationModel::student_t(5.0).unwrap();
        let v = t.sample(2, 1_000_000);
        let (m, s) = mean_var(&v);
        assert!(m.abs() < 0.01, "mean {m}");
        assert!((s - 1.0).abs() < 0.02, "variance {s}");
    }

    #[test]
    fn gaussian_point_values() {
        let g = InnovationModel::gaussian();
        assert_eq!(g.cdf(0.0), 0.5);
        assert_eq!(g.pdf_deriv(0.0), 0.0);
        assert_eq!(g.fourth_moment(), 3.0);
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for &p in &[1e-300, 1e-12, 1e-5, 0.01, 0.3, 0.5, 0.7, 0.975, 1.0 - 1e-9] {
            let x = normal_quantile(p);
            let back = normal_cdf(x);
            assert!(((back - p) / p.min(1.0 - p)).abs() < 1e-12, "p={p} back={back}");
        }
        // 0.975 quantile, 20 significant digits from published tables.
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-14);
    }

    #[test]
    fn pdf_matches_central_difference_of_cdf() {
        for model in [InnovationModel::gaussian(), InnovationModel::student_t(5.0).unwrap()] {
            let eps = 1e-4;
            let mut x = -4.0;
            while x <= 4.0 {
                let fd = (model.cdf(x + eps) - model.cdf(x - eps)) / (2.0 * eps);
                assert!((fd - model.pdf(x)).abs() < 1e-8, "x={x} fd={fd} pdf={}", model.pdf(x));
                x += 0.125;
            }
        }
    }

    #[test]
    fn pdf_deriv_matches_central_difference_of_pdf() {
        for model in [InnovationModel::gaussian(), InnovationModel::student_t(7.0).unwrap()] {
            let eps = 1e-4;
            let mut sup: f64 = 0.0;
            let mut x = -6.0;
            while x <= 6.0 {
                let fd = (model.pdf(x + eps) - model.pdf(x - eps)) / (2.0 * eps);
                let d = model.pdf_deriv(x);
                assert!((fd - d).abs() < 1e-4, "x={x}");
                let (_, d2) = model.pdf_and_deriv(x);
                assert_eq!(d, d2);
                sup = sup.max(d.abs());
                x += 0.01;
            }
            assert!(sup.is_finite() && sup < 1.0);
        }
    }

    #[test]
    fn cdf_increments_equal_density_integrals() {
        for model in [InnovationModel::gaussian(), InnovationModel::student_t(5.0).unwrap()] {
            for &(a, b) in &[(-3.0, -1.0), (-0.5, 0.25), (0.0, 4.0), (1.0, 9.0)] {
                let q = simpson(&|x| model.pdf(x), a, b, 1e-12);
                assert!((model.cdf(b) - model.cdf(a) - q).abs() < 1e-6);
            }
            let mass = simpson(&|x| model.pdf(x), -60.0, 60.0, 1e-12);
            assert!((mass - 1.0).abs() < 1e-3, "mass {mass}");
        }
    }

    #[test]
    fn empirical_cdf_within_ks_band() {
        for model in [InnovationModel::gaussian(), InnovationModel::student_t(5.0).unwrap()] {
            let n = 1_000_000;
            let mut v = model.sample(11, n);
            v.sort_by(f64::total_cmp);
            let nf = n as f64;
            let d = v
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let f = model.cdf(x);
                    ((i + 1) as f64 / nf - f).max(f - i as f64 / nf)
                })
                .fold(0.0, f64::max);
            assert!(d < 2.0 / nf.sqrt(), "KS distance {d}");
        }
    }

    #[test]
    fn student_t_fourth_moment_matches_monte_carlo() {
        // df = 10 keeps the eighth moment finite, so the standard error is honest
        let t = InnovationModel::student_t(10.0).unwrap();
        assert_eq!(t.fourth_moment(), 4.0);
        assert_eq!(InnovationModel::student_t(5.0).unwrap().fourth_moment(), 9.0);
        let n = 10_000_000usize;
        let mut rng = rng::stream(5);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let e = t.draw(&mut rng);
            let e4 = e.powi(4);
            s += e4;
            s2 += e4 * e4;
        }
        let nf = n as f64;
        let mean = s / nf;
        let se = ((s2 / nf - mean * mean) / nf).sqrt();
        assert!((mean - 4.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn heavy_tails_are_rejected() {
        assert!(InnovationModel::student_t(4.0).is_err());
        assert!(InnovationModel::student_t(3.0).is_err());
        assert!(InnovationModel::from_spec(&InnovationSpec { family: Family::StudentT, df: None }).is_err());
        assert!(InnovationModel::from_spec(&InnovationSpec { family: Family::Gaussian, df: Some(3.0) }).is_err());
    }

    #[test]
    fn density_positive_on_compact_windows() {
        for model in [InnovationModel::gaussian(), InnovationModel::student_t(5.0).unwrap()] {
            let min = (0..=200)
                .map(|i| model.pdf(-5.0 + i as f64 * 0.05))
                .fold(f64::INFINITY, f64::min);
            assert!(min > 0.0);
        }
    }
}
