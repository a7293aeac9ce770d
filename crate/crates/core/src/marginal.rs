//! Stationary marginal law of a GARCH process.
//!
//! The marginal is the scale mixture `F(x) = E H(x / sigma)` with density
//! `f(x) = E sigma^{-1} h(x / sigma)`. The expectation over the stationary
//! volatility is replaced by an average over `M` volatility draws thinned
//! from one long simulated path.
//!
//! Two evaluation routes are offered. The direct route sums the mixture
//! exactly and costs `O(M)` per point; [`MarginalModel::cdf`],
//! [`MarginalModel::pdf`] and [`MarginalModel::quantile`] use it. The
//! cached route interpolates a table of exact mixture values with cubic
//! Hermite pieces and costs `O(1)`; it backs the [`Law`] implementation
//! used for bulk work such as probability integral transforms.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::garch::{self, GarchParams, PathSample, Recursion, Verdict};
use crate::innovations::{Family, InnovationModel, InnovationSpec};
use crate::law::Law;
use crate::rng;

pub const DEFAULT_DRAWS: usize = 100_000;
pub const DEFAULT_GAP: usize = 50;
pub const MIN_DRAWS: usize = 10_000;

/// Segments of the interpolation table.
const TABLE_SEGMENTS: usize = 2048;
/// Probability mass left outside the table on each side.
const TABLE_TAIL: f64 = 1e-13;
const QUANTILE_TOL: f64 = 1e-10;
const MAGIC: &[u8; 8] = b"GBKMARG1";

#[derive(Clone, Debug, PartialEq)]
struct Component {
    sigma: f64,
    count: f64,
}

/// Values of `F`, `f` and `f'` at nodes `x_k = scale * sinh(t0 + k dt)`,
/// denser where the density is large.
#[derive(Clone, Debug, PartialEq)]
struct CdfTable {
    scale: f64,
    t0: f64,
    dt: f64,
    x: Vec<f64>,
    cdf: Vec<f64>,
    pdf: Vec<f64>,
    dpdf: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginalModel {
    params: GarchParams,
    innovation: InnovationModel,
    sigma_draws: Vec<f64>,
    gap: usize,
    seed: u64,
    components: Vec<Component>,
    total: f64,
    table: CdfTable,
}

/// Builds the marginal from `m` volatility draws taken every `gap` steps of
/// one path started after the default burn-in.
pub fn build_marginal(
    params: &GarchParams,
    innovation: &InnovationModel,
    m: usize,
    gap: usize,
    seed: u64,
) -> Result<MarginalModel> {
    params.validate()?;
    if m < MIN_DRAWS {
        return Err(Error::InvalidArgument(format!("need M >= {MIN_DRAWS} draws, got {m}")));
    }
    if gap == 0 {
        return Err(Error::InvalidArgument("thinning gap must be >= 1".into()));
    }
    if params.unconditional_variance().is_none() {
        let report = garch::is_stationary(params, innovation);
        if report.verdict != Verdict::Stationary {
            return Err(Error::NonStationary {
                gamma: report.gamma_hat,
                std_error: report.std_error,
            });
        }
    }

    let mut stream = rng::stream(seed);
    let mut rec = Recursion::new(params);
    for _ in 0..garch::DEFAULT_BURN_IN {
        rec.advance(innovation.draw(&mut stream))?;
    }
    let mut draws = Vec::with_capacity(m);
    for _ in 0..m {
        let mut s2 = 0.0;
        for _ in 0..gap {
            s2 = rec.advance(innovation.draw(&mut stream))?.0;
        }
        draws.push(s2.sqrt());
    }
    MarginalModel::from_sigma_draws(params.clone(), innovation.clone(), draws, gap, seed)
}

impl MarginalModel {
    /// Assembles a model from explicit volatility draws and tabulates `F`.
    pub fn from_sigma_draws(
        params: GarchParams,
        innovation: InnovationModel,
        sigma_draws: Vec<f64>,
        gap: usize,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        if sigma_draws.is_empty() {
            return Err(Error::InvalidArgument("no volatility draws".into()));
        }
        if let Some(s) = sigma_draws.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidArgument(format!("invalid volatility draw {s}")));
        }
        let components = compress(&sigma_draws);
        let total = sigma_draws.len() as f64;
        let table = CdfTable::build(&components, total, &innovation);
        Ok(Self { params, innovation, sigma_draws, gap, seed, components, total, table })
    }

    /// The model of `c X` for `c > 0`: volatilities and `delta` rescaled.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidArgument(format!("scale must be > 0, got {c}")));
        }
        let mut params = self.params.clone();
        params.delta *= c * c;
        let draws = self.sigma_draws.iter().map(|s| s * c).collect();
        Self::from_sigma_draws(params, self.innovation.clone(), draws, self.gap, self.seed)
    }

    pub fn params(&self) -> &GarchParams {
        &self.params
    }

    pub fn innovation(&self) -> &InnovationModel {
        &self.innovation
    }

    pub fn sigma_draws(&self) -> &[f64] {
        &self.sigma_draws
    }

    pub fn gap(&self) -> usize {
        self.gap
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of distinct volatility values in the mixture.
    pub fn distinct_components(&self) -> usize {
        self.components.len()
    }

    fn mixture(&self, x: f64) -> (f64, f64, f64) {
        mixture_values(&self.components, self.total, &self.innovation, x)
    }

    /// `M^{-1} sum_j H(x / sigma_j)`, summed exactly.
    pub fn cdf(&self, x: f64) -> f64 {
        self.mixture(x).0
    }

    /// `M^{-1} sum_j h(x / sigma_j) / sigma_j`, summed exactly.
    pub fn pdf(&self, x: f64) -> f64 {
        self.mixture(x).1
    }

    /// `f'(x) = M^{-1} sum_j h'(x / sigma_j) / sigma_j^2`.
    pub fn pdf_deriv(&self, x: f64) -> f64 {
        self.mixture(x).2
    }

    /// Quantile of the exact mixture: the table gives a starting bracket,
    /// then safeguarded Newton steps on the direct CDF until
    /// `|cdf(x) - y| <= 1e-10` and the step is at rounding level.
    pub fn quantile(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y < 1.0) {
            return Err(Error::InvalidArgument(format!("quantile level must lie in (0,1), got {y}")));
        }
        let start = self.quantile_cached(y);
        let start = if start.is_finite() { start } else { 0.0 };
        let mut width = 1e-6 * (1.0 + start.abs());
        let (mut lo, mut hi) = (start - width, start + width);
        let mut expansions = 0;
        while self.cdf(lo) > y {
            width *= 4.0;
            lo = start - width;
            expansions += 1;
            if expansions > 200 || !lo.is_finite() {
                return Err(Error::Bracketing(y));
            }
        }
        while self.cdf(hi) < y {
            width *= 4.0;
            hi = start + width;
            expansions += 1;
            if expansions > 200 || !hi.is_finite() {
                return Err(Error::Bracketing(y));
            }
        }

        let mut x = start.clamp(lo, hi);
        for _ in 0..200 {
            let (f, d, _) = self.mixture(x);
            let r = f - y;
            if r == 0.0 {
                return Ok(x);
            }
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let newton = x - r / d;
            let next = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let step = (next - x).abs();
            x = next;
            if step <= 4.0 * f64::EPSILON * x.abs().max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * x.abs() {
                break;
            }
        }
        if (self.cdf(x) - y).abs() > QUANTILE_TOL {
            return Err(Error::Bracketing(y));
        }
        Ok(x)
    }

    /// `F` from the interpolation table. Nondecreasing; exact at nodes.
    pub fn cdf_cached(&self, x: f64) -> f64 {
        match self.table.segment(x) {
            Some((k, s)) => self.table.cdf_at(k, s),
            None => self.cdf(x),
        }
    }

    pub fn pdf_cached(&self, x: f64) -> f64 {
        match self.table.segment(x) {
            Some((k, s)) => self.table.pdf_at(k, s),
            None => self.pdf(x),
        }
    }

    /// Inverse of [`MarginalModel::cdf_cached`].
    pub fn quantile_cached(&self, y: f64) -> f64 {
        let t = &self.table;
        let last = t.cdf.len() - 1;
        if !(y > t.cdf[0] && y < t.cdf[last]) {
            if y <= 0.0 {
                return f64::NEG_INFINITY;
            }
            if y >= 1.0 {
                return f64::INFINITY;
            }
            return self.tail_quantile(y);
        }
        // first node with F > y, minus one
        let k = t.cdf.partition_point(|&c| c <= y) - 1;
        let k = k.min(last - 1);
        t.invert_segment(k, y)
    }

    /// Bisection on the direct CDF beyond the table range.
    fn tail_quantile(&self, y: f64) -> f64 {
        let t = &self.table;
        let (mut lo, mut hi) = if y <= t.cdf[0] {
            let edge = t.x[0];
            let mut lo = 2.0 * edge;
            while self.cdf(lo) > y && lo.is_finite() {
                lo *= 2.0;
            }
            (lo, edge)
        } else {
            let edge = *t.x.last().unwrap();
            let mut hi = 2.0 * edge;
            while self.cdf(hi) < y && hi.is_finite() {
                hi *= 2.0;
            }
            (edge, hi)
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Smallest `f(Q(y))` over `points` levels evenly spread on `[y0, y1]`;
    /// positive on the working interval.
    pub fn min_density_on(&self, y0: f64, y1: f64, points: usize) -> Result<f64> {
        let mut min = f64::INFINITY;
        for y in level_grid(y0, y1, points) {
            min = min.min(self.pdf(self.quantile(y)?));
        }
        Ok(min)
    }

    /// Largest `|f'(Q(y))|` over `points` levels evenly spread on `[y0, y1]`.
    pub fn max_density_slope_on(&self, y0: f64, y1: f64, points: usize) -> Result<f64> {
        let mut max: f64 = 0.0;
        for y in level_grid(y0, y1, points) {
            max = max.max(self.pdf_deriv(self.quantile(y)?).abs());
        }
        Ok(max)
    }

    /// Rows `(x, F(x), f(x))` at the table nodes.
    pub fn grid(&self) -> Vec<(f64, f64, f64)> {
        let t = &self.table;
        (0..t.x.len()).map(|k| (t.x[k], t.cdf[k], t.pdf[k])).collect()
    }

    pub fn write_grid_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "F", "f"])?;
        for (x, f, d) in self.grid() {
            w.write_record([x.to_string(), f.to_string(), d.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> MarginalSummary {
        let mut sorted = self.sigma_draws.clone();
        sorted.sort_by(f64::total_cmp);
        MarginalSummary {
            draws: sorted.len(),
            gap: self.gap,
            seed: self.seed,
            sigma_min: sorted[0],
            sigma_median: sorted[sorted.len() / 2],
            sigma_max: sorted[sorted.len() - 1],
            table_nodes: self.table.x.len(),
        }
    }

    /// Binary little-endian encoding: parameters, volatility draws and the
    /// interpolation table.
    pub fn write_binary<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        w.write_all(MAGIC)?;
        put_f64(&mut w, self.params.delta)?;
        put_vec(&mut w, &self.params.beta)?;
        put_vec(&mut w, &self.params.alpha)?;
        let spec = self.innovation.spec();
        let family: u64 = match spec.family {
            Family::Gaussian => 0,
            Family::StudentT => 1,
        };
        put_u64(&mut w, family)?;
        put_f64(&mut w, spec.df.unwrap_or(0.0))?;
        put_u64(&mut w, self.gap as u64)?;
        put_u64(&mut w, self.seed)?;
        put_vec(&mut w, &self.sigma_draws)?;
        let t = &self.table;
        put_f64(&mut w, t.scale)?;
        put_f64(&mut w, t.t0)?;
        put_f64(&mut w, t.dt)?;
        for v in [&t.x, &t.cdf, &t.pdf, &t.dpdf] {
            put_vec(&mut w, v)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(input: R) -> Result<Self> {
        let mut r = BufReader::new(input);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::InvalidArgument("not a marginal model file".into()));
        }
        let delta = get_f64(&mut r)?;
        let beta = get_vec(&mut r)?;
        let alpha = get_vec(&mut r)?;
        let params = GarchParams::new(delta, beta, alpha)?;
        let family = get_u64(&mut r)?;
        let df = get_f64(&mut r)?;
        let spec = match family {
            0 => InnovationSpec::gaussian(),
            1 => InnovationSpec::student_t(df),
            other => return Err(Error::InvalidArgument(format!("unknown innovation family {other}"))),
        };
        let innovation = spec.build()?;
        let gap = get_u64(&mut r)? as usize;
        let seed = get_u64(&mut r)?;
        let sigma_draws = get_vec(&mut r)?;
        if sigma_draws.is_empty() || sigma_draws.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument("invalid volatility draws in model file".into()));
        }
        let scale = get_f64(&mut r)?;
        let t0 = get_f64(&mut r)?;
        let dt = get_f64(&mut r)?;
        let x = get_vec(&mut r)?;
        let cdf = get_vec(&mut r)?;
        let pdf = get_vec(&mut r)?;
        let dpdf = get_vec(&mut r)?;
        let n = x.len();
        if n < 2 || cdf.len() != n || pdf.len() != n || dpdf.len() != n {
            return Err(Error::InvalidArgument("corrupt interpolation table".into()));
        }
        let components = compress(&sigma_draws);
        let total = sigma_draws.len() as f64;
        Ok(Self {
            params,
            innovation,
            sigma_draws,
            gap,
            seed,
            components,
            total,
            table: CdfTable { scale, t0, dt, x, cdf, pdf, dpdf },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_binary(File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_binary(File::open(path)?)
    }
}

impl Law for MarginalModel {
    fn cdf(&self, x: f64) -> f64 {
        self.cdf_cached(x)
    }
    fn pdf(&self, x: f64) -> f64 {
        self.pdf_cached(x)
    }
    fn quantile(&self, y: f64) -> f64 {
        self.quantile_cached(y)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MarginalSummary {
    pub draws: usize,
    pub gap: usize,
    pub seed: u64,
    pub sigma_min: f64,
    pub sigma_median: f64,
    pub sigma_max: f64,
    pub table_nodes: usize,
}

/// Probability integral transform `U_i = F(X_i)` through the cached CDF.
///
/// The marginal must come from the path's parameters and from a different
/// seed than the path.
pub fn pit(path: &PathSample, m: &MarginalModel) -> Result<Vec<f64>> {
    check_compatible(path, m)?;
    Ok(path.x.iter().map(|&x| m.cdf_cached(x)).collect())
}

pub(crate) fn check_compatible(path: &PathSample, m: &MarginalModel) -> Result<()> {
    if let Some(params) = &path.params {
        if params != m.params() {
            return Err(Error::Mismatch(format!(
                "path parameters {params:?} differ from marginal parameters {:?}",
                m.params()
            )));
        }
        if path.seed == m.seed() {
            return Err(Error::Mismatch(format!(
                "path seed {} reuses the marginal build seed",
                path.seed
            )));
        }
    }
    // sigma^2 >= delta holds for every path of the marginal's parameters
    let floor = m.params().delta * (1.0 - 1e-12);
    if let Some(s) = path.sigma2.iter().find(|&&s| s < floor) {
        return Err(Error::Mismatch(format!(
            "path variance {s} is below the marginal's delta {}",
            m.params().delta
        )));
    }
    Ok(())
}

fn level_grid(y0: f64, y1: f64, points: usize) -> impl Iterator<Item = f64> {
    let points = points.max(2);
    (0..points).map(move |i| y0 + (y1 - y0) * i as f64 / (points - 1) as f64)
}

/// Merges equal volatility values into weighted components.
fn compress(draws: &[f64]) -> Vec<Component> {
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<Component> = Vec::new();
    for s in sorted {
        match out.last_mut() {
            Some(c) if c.sigma == s => c.count += 1.0,
            _ => out.push(Component { sigma: s, count: 1.0 }),
        }
    }
    out
}

/// `(F, f, f')` of the mixture at `x`. Integer counts keep symmetric
/// identities such as `F(0) = 1/2` exact.
fn mixture_values(components: &[Component], total: f64, h: &InnovationModel, x: f64) -> (f64, f64, f64) {
    let (mut cdf, mut pdf, mut dpdf) = (0.0, 0.0, 0.0);
    for c in components {
        let inv = 1.0 / c.sigma;
        let z = x * inv;
        let (d, dd) = h.pdf_and_deriv(z);
        cdf += c.count * h.cdf(z);
        pdf += c.count * d * inv;
        dpdf += c.count * dd * inv * inv;
    }
    (cdf / total, pdf / total, dpdf / total)
}

impl CdfTable {
    fn build(components: &[Component], total: f64, h: &InnovationModel) -> Self {
        let sigma_max = components.last().map(|c| c.sigma).unwrap_or(1.0);
        // weighted median volatility
        let mut acc = 0.0;
        let scale = components
            .iter()
            .find(|c| {
                acc += c.count;
                acc >= 0.5 * total
            })
            .map(|c| c.sigma)
            .unwrap_or(sigma_max);
        let lo = sigma_max * h.quantile(TABLE_TAIL);
        let hi = sigma_max * h.quantile(1.0 - TABLE_TAIL);
        let t0 = (lo / scale).asinh();
        let t1 = (hi / scale).asinh();
        let dt = (t1 - t0) / TABLE_SEGMENTS as f64;
        let x: Vec<f64> = (0..=TABLE_SEGMENTS)
            .map(|k| scale * (t0 + k as f64 * dt).sinh())
            .collect();
        let mut cdf = Vec::with_capacity(x.len());
        let mut pdf = Vec::with_capacity(x.len());
        let mut dpdf = Vec::with_capacity(x.len());
        for &xk in &x {
            let (c, d, dd) = mixture_values(components, total, h, xk);
            cdf.push(c);
            pdf.push(d);
            dpdf.push(dd);
        }
        // guard against rounding making the node values non-monotone
        for k in 1..cdf.len() {
            if cdf[k] < cdf[k - 1] {
                cdf[k] = cdf[k - 1];
            }
        }
        Self { scale, t0, dt, x, cdf, pdf, dpdf }
    }

    /// Segment index and local coordinate in `[0, 1]`, if `x` is covered.
    fn segment(&self, x: f64) -> Option<(usize, f64)> {
        let last = self.x.len() - 1;
        if !(x >= self.x[0] && x <= self.x[last]) {
            return None;
        }
        let t = (x / self.scale).asinh();
        let mut k = (((t - self.t0) / self.dt).floor().max(0.0) as usize).min(last - 1);
        while k > 0 && x < self.x[k] {
            k -= 1;
        }
        while k < last - 1 && x > self.x[k + 1] {
            k += 1;
        }
        let h = self.x[k + 1] - self.x[k];
        Some((k, ((x - self.x[k]) / h).clamp(0.0, 1.0)))
    }

    fn hermite(&self, k: usize, s: f64, v: &[f64], dv: &[f64]) -> f64 {
        let h = self.x[k + 1] - self.x[k];
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * v[k]
            + (s3 - 2.0 * s2 + s) * h * dv[k]
            + (3.0 * s2 - 2.0 * s3) * v[k + 1]
            + (s3 - s2) * h * dv[k + 1]
    }

    fn cdf_at(&self, k: usize, s: f64) -> f64 {
        self.hermite(k, s, &self.cdf, &self.pdf).clamp(self.cdf[k], self.cdf[k + 1])
    }

    fn pdf_at(&self, k: usize, s: f64) -> f64 {
        self.hermite(k, s, &self.pdf, &self.dpdf).max(0.0)
    }

    /// Solves `cdf_at(k, s) = y` on one segment by safeguarded Newton.
    fn invert_segment(&self, k: usize, y: f64) -> f64 {
        let h = self.x[k + 1] - self.x[k];
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let span = self.cdf[k + 1] - self.cdf[k];
        let mut s = if span > 0.0 { ((y - self.cdf[k]) / span).clamp(0.0, 1.0) } else { 0.5 };
        for _ in 0..100 {
            let r = self.hermite(k, s, &self.cdf, &self.pdf) - y;
            if r == 0.0 {
                break;
            }
            if r > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let d = h * self.hermite(k, s, &self.pdf, &self.dpdf);
            let newton = s - r / d;
            let next = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            let done = (next - s).abs() <= 1e-15;
            s = next;
            if done || hi - lo <= 1e-15 {
                break;
            }
        }
        self.x[k] + s * h
    }
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_vec<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    put_u64(w, v.len() as u64)?;
    for x in v {
        put_f64(w, *x)?;
    }
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_vec<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let len = get_u64(r)?;
    if len > (1 << 32) {
        return Err(Error::InvalidArgument(format!("implausible vector length {len}")));
    }
    (0..len).map(|_| get_f64(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::innovations::normal_quantile;
    use std::sync::OnceLock;

    fn garch_marginal() -> &'static MarginalModel {
        static M: OnceLock<MarginalModel> = OnceLock::new();
        M.get_or_init(|| {
            let params = GarchParams::new(0.1, vec![0.8], vec![0.1]).unwrap();
            build_marginal(&params, &InnovationModel::gaussian(), 20_000, 20, 3).unwrap()
        })
    }

    fn iid_marginal(delta: f64) -> MarginalModel {
        build_marginal(&GarchParams::iid(delta).unwrap(), &InnovationModel::gaussian(), MIN_DRAWS, 1, 1).unwrap()
    }

    #[test]
    fn iid_collapses_to_innovation_law() {
        let m = iid_marginal(1.0);
        assert_eq!(m.distinct_components(), 1);
        assert!(m.sigma_draws().iter().all(|&s| s == 1.0));
        let h = InnovationModel::gaussian();
        assert!((m.cdf(1.96) - h.cdf(1.96)).abs() < 1e-9);
        let m4 = iid_marginal(4.0);
        for &x in &[-3.0, -0.7, 0.0, 1.1, 5.0] {
            assert!((m4.cdf(x) - h.cdf(x / 2.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_mixture_is_centered() {
        let m = garch_marginal();
        assert_eq!(m.cdf(0.0), 0.5);
        assert!(m.quantile(0.5).unwrap().abs() < 1e-10);
        assert!(m.sigma_draws().iter().all(|&s| s >= 0.1f64.sqrt()));
    }

    #[test]
    fn cdf_is_monotone_with_limits() {
        let m = garch_marginal();
        let mut prev = 0.0;
        for i in 0..=4000 {
            let x = -40.0 + i as f64 * 0.02;
            let c = m.cdf(x);
            let cc = m.cdf_cached(x);
            assert!(c >= prev && cc >= 0.0);
            prev = c;
        }
        assert!(m.cdf(-1e6) < 1e-12);
        assert!(m.cdf(1e6) > 1.0 - 1e-12);
    }

    #[test]
    fn pdf_is_derivative_of_cdf() {
        let m = garch_marginal();
        let eps = 1e-4;
        for i in 0..=80 {
            let x = -8.0 + i as f64 * 0.2;
            let fd = (m.cdf(x + eps) - m.cdf(x - eps)) / (2.0 * eps);
            assert!((fd - m.pdf(x)).abs() < 1e-7, "x={x}");
            let fd2 = (m.pdf(x + eps) - m.pdf(x - eps)) / (2.0 * eps);
            assert!((fd2 - m.pdf_deriv(x)).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn cached_route_agrees_with_direct() {
        let m = garch_marginal();
        for i in 0..=1000 {
            let x = -12.0 + i as f64 * 0.024;
            assert!((m.cdf_cached(x) - m.cdf(x)).abs() < 1e-10, "cdf x={x}");
            assert!((m.pdf_cached(x) - m.pdf(x)).abs() < 1e-8, "pdf x={x}");
        }
        for i in 1..200 {
            let y = i as f64 / 200.0;
            let q = m.quantile_cached(y);
            assert!((m.cdf_cached(q) - y).abs() < 1e-13);
        }
    }

    #[test]
    fn quantile_round_trip_and_monotone() {
        let m = garch_marginal();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=40 {
            let x = -6.0 + 0.3 * i as f64;
            let q = m.quantile(m.cdf(x)).unwrap();
            assert!((q - x).abs() < 1e-8, "x={x} q={q}");
            assert!(q > prev);
            prev = q;
        }
        assert!(m.quantile(0.0).is_err());
        assert!(m.quantile(1.0).is_err());
    }

    #[test]
    fn quantile_matches_independent_normal_inversion() {
        // Newton refinement of the erf-based inversion as the oracle
        let mut z = normal_quantile(0.975);
        for _ in 0..3 {
            let h = InnovationModel::gaussian();
            z -= (h.cdf(z) - 0.975) / h.pdf(z);
        }
        let m = iid_marginal(1.0);
        assert!((m.quantile(0.975).unwrap() - z).abs() < 1e-6);
        assert!((m.quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-9);
    }

    #[test]
    fn independent_builds_agree_within_monte_carlo_error() {
        let params = GarchParams::new(0.1, vec![0.8], vec![0.1]).unwrap();
        let h = InnovationModel::gaussian();
        let m = 20_000;
        let a = build_marginal(&params, &h, m, 20, 11).unwrap();
        let b = build_marginal(&params, &h, m, 20, 12).unwrap();
        let sup = (0..=500)
            .map(|i| {
                let x = -6.0 + i as f64 * 0.024;
                (a.cdf_cached(x) - b.cdf_cached(x)).abs()
            })
            .fold(0.0, f64::max);
        assert!(sup < 3.0 / (m as f64).sqrt(), "sup {sup}");
    }

    #[test]
    fn working_window_density_conditions() {
        let m = garch_marginal();
        assert!(m.min_density_on(0.05, 0.95, 50).unwrap() > 0.0);
        let slope = m.max_density_slope_on(0.05, 0.95, 50).unwrap();
        assert!(slope.is_finite() && slope < 10.0);
    }

    #[test]
    fn binary_round_trip() {
        let m = garch_marginal();
        let mut buf = Vec::new();
        m.write_binary(&mut buf).unwrap();
        let back = MarginalModel::read_binary(buf.as_slice()).unwrap();
        assert_eq!(&back, m);
        assert!(MarginalModel::read_binary(&b"nonsense"[..]).is_err());
    }

    #[test]
    fn pit_checks_provenance() {
        let params = GarchParams::new(0.1, vec![0.8], vec![0.1]).unwrap();
        let h = InnovationModel::gaussian();
        let m = garch_marginal();
        let reused = garch::simulate(&params, &h, 100, 10, m.seed()).unwrap();
        assert!(matches!(pit(&reused, m), Err(Error::Mismatch(_))));
        let other = GarchParams::new(0.1, vec![0.7], vec![0.1]).unwrap();
        let wrong = garch::simulate(&other, &h, 100, 10, 99).unwrap();
        assert!(matches!(pit(&wrong, m), Err(Error::Mismatch(_))));
        let path = garch::simulate(&params, &h, 2000, 1000, 99).unwrap();
        let u = pit(&path, m).unwrap();
        assert!(u.iter().all(|&v| v > 0.0 && v < 1.0));
        for i in 0..200 {
            for j in 0..200 {
                if path.x[i] < path.x[j] {
                    assert!(u[i] <= u[j]);
                }
            }
        }
    }

    #[test]
    fn build_rejects_bad_input() {
        let h = InnovationModel::gaussian();
        let params = GarchParams::new(0.1, vec![0.8], vec![0.1]).unwrap();
        assert!(build_marginal(&params, &h, 100, 1, 1).is_err());
        let explosive = GarchParams::new(0.1, vec![1.2], vec![0.5]).unwrap();
        assert!(matches!(
            build_marginal(&explosive, &h, MIN_DRAWS, 1, 1),
            Err(Error::NonStationary { .. })
        ));
    }
}
