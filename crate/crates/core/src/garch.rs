//! GARCH(p, q) volatility processes.
//!
//! `X_k = sigma_k * eps_k` with
//! `sigma_k^2 = delta + sum_i beta_i sigma_{k-i}^2 + sum_j alpha_j X_{k-j}^2`.
//! Besides simulation this module carries the stationarity machinery (top
//! Lyapunov exponent of the companion-matrix products), the ARCH(infinity)
//! expansion and a few path diagnostics.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovations::InnovationModel;
use crate::rng;

/// Default number of discarded recursion steps before a path is recorded.
pub const DEFAULT_BURN_IN: usize = 10_000;

/// Variance level treated as divergence of the recursion.
pub const DIVERGENCE_LIMIT: f64 = 1e300;

/// Iterations used by [`is_stationary`].
pub const STATIONARITY_ITERATIONS: usize = 200_000;
const STATIONARITY_SEED: u64 = 0x05ee_d1a9_u64;

const LYAPUNOV_BATCHES: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GarchParams {
    pub delta: f64,
    #[serde(default)]
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl GarchParams {
    pub fn new(delta: f64, beta: Vec<f64>, alpha: Vec<f64>) -> Result<Self> {
        let params = Self { delta, beta, alpha };
        params.validate()?;
        Ok(params)
    }

    /// Constant-variance model: `X_k = sqrt(delta) * eps_k`.
    pub fn iid(delta: f64) -> Result<Self> {
        Self::new(delta, Vec::new(), vec![0.0])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidParams(format!("delta must be > 0, got {}", self.delta)));
        }
        if self.alpha.is_empty() {
            return Err(Error::InvalidParams("at least one alpha coefficient is required".into()));
        }
        for (name, coeffs) in [("beta", &self.beta), ("alpha", &self.alpha)] {
            if let Some(c) = coeffs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
                return Err(Error::InvalidParams(format!(
                    "{name} coefficients must be finite and >= 0, got {c}"
                )));
            }
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn q(&self) -> usize {
        self.alpha.len()
    }

    pub fn beta_sum(&self) -> f64 {
        self.beta.iter().sum()
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// True when every coefficient vanishes, so the path is i.i.d.
    pub fn is_iid(&self) -> bool {
        self.beta.iter().chain(&self.alpha).all(|&c| c == 0.0)
    }

    /// `E sigma^2 = delta / (1 - sum beta - sum alpha)` for unit-variance
    /// innovations, when the denominator is positive.
    pub fn unconditional_variance(&self) -> Option<f64> {
        let persistence = self.beta_sum() + self.alpha_sum();
        (persistence < 1.0).then(|| self.delta / (1.0 - persistence))
    }

    /// Dimension of the companion matrix after dropping empty blocks.
    pub fn companion_dim(&self) -> usize {
        self.p().max(1) + self.q().max(1) - 1
    }
}

/// A simulated stretch `X_1..X_n` together with its conditional variances.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    pub x: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub seed: u64,
    pub burn_in: usize,
    /// Generating parameters, when known. Paths loaded from CSV carry none.
    pub params: Option<GarchParams>,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Writes columns `k, x, sigma2`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "x", "sigma2"])?;
        for (k, (x, s2)) in self.x.iter().zip(&self.sigma2).enumerate() {
            w.serialize((k, x, s2))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a file written by [`PathSample::write_csv`]. Seed, burn-in and
    /// parameters are not stored in the file and come back empty.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let malformed = |reason: String| Error::Malformed { path: path.to_path_buf(), reason };
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.iter().ne(["k", "x", "sigma2"]) {
            return Err(malformed("expected columns k,x,sigma2".into()));
        }
        let mut x = Vec::new();
        let mut sigma2 = Vec::new();
        for (i, rec) in r.deserialize::<(usize, f64, f64)>().enumerate() {
            let (k, xk, s2) = rec.map_err(|e| malformed(format!("row {}: {e}", i + 1)))?;
            if k != i || !xk.is_finite() || !(s2.is_finite() && s2 > 0.0) {
                return Err(malformed(format!("row {}: bad index or value", i + 1)));
            }
            x.push(xk);
            sigma2.push(s2);
        }
        if x.is_empty() {
            return Err(malformed("no rows".into()));
        }
        Ok(Self { x, sigma2, seed: 0, burn_in: 0, params: None })
    }
}

/// One-step variance recursion with ring buffers for the lags.
pub(crate) struct Recursion<'a> {
    params: &'a GarchParams,
    sigma2_lags: Vec<f64>,
    x2_lags: Vec<f64>,
    head_s: usize,
    head_x: usize,
    step: usize,
}

impl<'a> Recursion<'a> {
    /// Pre-sample lags start at the unconditional variance when it exists,
    /// otherwise at `delta`.
    pub(crate) fn new(params: &'a GarchParams) -> Self {
        let start = params.unconditional_variance().unwrap_or(params.delta);
        Self {
            params,
            sigma2_lags: vec![start; params.p()],
            x2_lags: vec![start; params.q()],
            head_s: 0,
            head_x: 0,
            step: 0,
        }
    }

    /// Advances one step with innovation `eps`, returning `(sigma^2, x)`.
    pub(crate) fn advance(&mut self, eps: f64) -> Result<(f64, f64)> {
        let p = self.sigma2_lags.len();
        let q = self.x2_lags.len();
        let mut s2 = self.params.delta;
        // lag i lives at (head - i) mod len
        for (i, b) in self.params.beta.iter().enumerate() {
            s2 += b * self.sigma2_lags[(self.head_s + p - 1 - i) % p];
        }
        for (j, a) in self.params.alpha.iter().enumerate() {
            s2 += a * self.x2_lags[(self.head_x + q - 1 - j) % q];
        }
        if !(s2 <= DIVERGENCE_LIMIT) {
            return Err(Error::Divergence { step: self.step, value: s2 });
        }
        let x = s2.sqrt() * eps;
        if p > 0 {
            self.sigma2_lags[self.head_s] = s2;
            self.head_s = (self.head_s + 1) % p;
        }
        self.x2_lags[self.head_x] = x * x;
        self.head_x = (self.head_x + 1) % q;
        self.step += 1;
        Ok((s2, x))
    }
}

/// Sufficient check that avoids the Lyapunov estimate: finite second
/// moment (`sum beta + sum alpha < 1`) implies `gamma < 0`.
fn second_order_stationary(params: &GarchParams) -> bool {
    params.unconditional_variance().is_some()
}

/// Simulates `n` points after `burn_in` discarded steps. Rejects parameters
/// whose stationarity verdict is not `Stationary`.
pub fn simulate(
    params: &GarchParams,
    model: &InnovationModel,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<PathSample> {
    params.validate()?;
    if !second_order_stationary(params) {
        let report = is_stationary(params, model);
        if report.verdict != Verdict::Stationary {
            return Err(Error::NonStationary {
                gamma: report.gamma_hat,
                std_error: report.std_error,
            });
        }
    }
    simulate_unchecked(params, model, n, burn_in, seed)
}

/// [`simulate`] without the stationarity gate. The divergence guard still
/// applies.
pub fn simulate_unchecked(
    params: &GarchParams,
    model: &InnovationModel,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<PathSample> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("path length must be >= 1".into()));
    }
    let mut rng = rng::stream(seed);
    let mut rec = Recursion::new(params);
    for _ in 0..burn_in {
        rec.advance(model.draw(&mut rng))?;
    }
    let mut x = Vec::with_capacity(n);
    let mut sigma2 = Vec::with_capacity(n);
    for _ in 0..n {
        let (s2, xk) = rec.advance(model.draw(&mut rng))?;
        sigma2.push(s2);
        x.push(xk);
    }
    Ok(PathSample { x, sigma2, seed, burn_in, params: Some(params.clone()) })
}

/// Dense row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CompanionMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl CompanionMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim);
        self.data
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Companion matrix `A_k` of the Markov form `Y_k = A_k Y_{k-1} + B` with
/// state `Y_k = (sigma_{k+1}^2, .., sigma_{k-p+2}^2, X_k^2, .., X_{k-q+2}^2)`
/// and `B = (delta, 0, .., 0)`. For `p = 0` a zero `beta_1` is assumed.
pub fn companion_matrix(params: &GarchParams, eps: f64) -> CompanionMatrix {
    let p = params.p().max(1);
    let q = params.q().max(1);
    let dim = p + q - 1;
    let beta = |i: usize| params.beta.get(i - 1).copied().unwrap_or(0.0);
    let alpha = |j: usize| params.alpha.get(j - 1).copied().unwrap_or(0.0);
    let e2 = eps * eps;
    let mut data = vec![0.0; dim * dim];

    data[0] = beta(1) + alpha(1) * e2;
    for i in 2..=p {
        data[i - 1] = beta(i);
    }
    for j in 2..=q {
        data[p + j - 2] = alpha(j);
    }
    for row in 1..p {
        data[row * dim + row - 1] = 1.0;
    }
    if q >= 2 {
        data[p * dim] = e2;
        for row in p + 1..dim {
            data[row * dim + row - 1] = 1.0;
        }
    }
    CompanionMatrix { dim, data }
}

/// `out = A v` using the sparsity of the companion matrix.
fn apply_companion(params: &GarchParams, e2: f64, v: &[f64], out: &mut [f64]) {
    let p = params.p().max(1);
    let q = params.q().max(1);
    let beta = |i: usize| params.beta.get(i - 1).copied().unwrap_or(0.0);
    let mut first = (beta(1) + params.alpha[0] * e2) * v[0];
    for i in 2..=p {
        first += beta(i) * v[i - 1];
    }
    for j in 2..=q {
        first += params.alpha[j - 1] * v[p + j - 2];
    }
    out[0] = first;
    out[1..p].copy_from_slice(&v[..p - 1]);
    if q >= 2 {
        out[p] = e2 * v[0];
        let dim = out.len();
        out[p + 1..dim].copy_from_slice(&v[p..dim - 1]);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub gamma_hat: f64,
    pub std_error: f64,
    pub iterations: usize,
}

/// Estimates the top Lyapunov exponent of the companion-matrix products.
///
/// Runs the matrix-vector recursion `v <- A_k v / |A_k v|` and averages the
/// log growth; the standard error comes from batch means. GARCH(1,1) reduces
/// to the scalar average of `log(beta_1 + alpha_1 eps^2)`. All-zero
/// coefficients give `gamma_hat = -inf`.
pub fn lyapunov_exponent(
    params: &GarchParams,
    model: &InnovationModel,
    iterations: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    params.validate()?;
    if iterations < 1000 {
        return Err(Error::InvalidArgument(format!(
            "lyapunov estimation needs >= 1000 iterations, got {iterations}"
        )));
    }
    if params.is_iid() {
        return Ok(LyapunovEstimate { gamma_hat: f64::NEG_INFINITY, std_error: 0.0, iterations });
    }

    let mut rng = rng::stream(seed);
    let dim = params.companion_dim();
    let mut logs = Vec::with_capacity(iterations);
    if dim == 1 {
        let b1 = params.beta.first().copied().unwrap_or(0.0);
        let a1 = params.alpha[0];
        for _ in 0..iterations {
            let e = model.draw(&mut rng);
            logs.push((b1 + a1 * e * e).ln());
        }
    } else {
        let mut v = vec![1.0 / dim as f64; dim];
        let mut w = vec![0.0; dim];
        for _ in 0..iterations {
            let e = model.draw(&mut rng);
            apply_companion(params, e * e, &v, &mut w);
            // entries are nonnegative, so the l1 norm is the plain sum
            let norm: f64 = w.iter().sum();
            if norm <= 0.0 {
                return Ok(LyapunovEstimate {
                    gamma_hat: f64::NEG_INFINITY,
                    std_error: 0.0,
                    iterations,
                });
            }
            logs.push(norm.ln());
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / norm;
            }
        }
    }

    let gamma_hat = logs.iter().sum::<f64>() / iterations as f64;
    if !gamma_hat.is_finite() {
        return Ok(LyapunovEstimate { gamma_hat, std_error: 0.0, iterations });
    }
    let batch_means: Vec<f64> = (0..LYAPUNOV_BATCHES)
        .map(|b| {
            let lo = b * iterations / LYAPUNOV_BATCHES;
            let hi = (b + 1) * iterations / LYAPUNOV_BATCHES;
            logs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let mean = batch_means.iter().sum::<f64>() / LYAPUNOV_BATCHES as f64;
    let var = batch_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>()
        / (LYAPUNOV_BATCHES - 1) as f64;
    Ok(LyapunovEstimate {
        gamma_hat,
        std_error: (var / LYAPUNOV_BATCHES as f64).sqrt(),
        iterations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stationary,
    NonStationary,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub verdict: Verdict,
    pub gamma_hat: f64,
    pub std_error: f64,
    /// `|gamma_hat| - 3 * std_error`; positive when the verdict is conclusive.
    pub margin: f64,
}

/// Stationarity verdict from the sign of the Lyapunov exponent, with a
/// three-standard-error band around zero reported as inconclusive.
pub fn is_stationary(params: &GarchParams, model: &InnovationModel) -> StationarityReport {
    is_stationary_with(params, model, STATIONARITY_ITERATIONS, STATIONARITY_SEED)
}

pub fn is_stationary_with(
    params: &GarchParams,
    model: &InnovationModel,
    iterations: usize,
    seed: u64,
) -> StationarityReport {
    let est = match lyapunov_exponent(params, model, iterations.max(1000), seed) {
        Ok(est) => est,
        Err(_) => {
            return StationarityReport {
                verdict: Verdict::Inconclusive,
                gamma_hat: f64::NAN,
                std_error: f64::NAN,
                margin: f64::NAN,
            }
        }
    };
    let band = 3.0 * est.std_error;
    let verdict = if est.gamma_hat + band < 0.0 {
        Verdict::Stationary
    } else if est.gamma_hat - band > 0.0 {
        Verdict::NonStationary
    } else {
        Verdict::Inconclusive
    };
    StationarityReport {
        verdict,
        gamma_hat: est.gamma_hat,
        std_error: est.std_error,
        margin: est.gamma_hat.abs() - band,
    }
}

/// Coefficients of `sigma_k^2 = a + sum_{i>=1} b_i X_{k-i}^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchInfinity {
    pub a: f64,
    pub b: Vec<f64>,
}

impl ArchInfinity {
    /// `a + sum_{i<=m} b_i X_{k-i}^2` for the path index `k` (0-based);
    /// needs `k >= m`.
    pub fn truncated_variance(&self, x: &[f64], k: usize) -> f64 {
        self.b
            .iter()
            .enumerate()
            .fold(self.a, |acc, (i, b)| acc + b * x[k - 1 - i] * x[k - 1 - i])
    }
}

/// First `m` ARCH(infinity) coefficients: `a = delta / (1 - sum beta)` and
/// `b_i` the power-series coefficients of `alpha(z) / (1 - beta(z))`.
pub fn arch_infinity_coeffs(params: &GarchParams, m: usize) -> Result<ArchInfinity> {
    params.validate()?;
    let beta_sum = params.beta_sum();
    if beta_sum >= 1.0 {
        return Err(Error::InvalidParams(format!(
            "ARCH(infinity) expansion needs sum beta < 1, got {beta_sum}"
        )));
    }
    let mut b = Vec::with_capacity(m);
    for i in 1..=m {
        let mut bi = params.alpha.get(i - 1).copied().unwrap_or(0.0);
        for (j, beta) in params.beta.iter().enumerate().take(i - 1) {
            bi += beta * b[i - 2 - j];
        }
        b.push(bi);
    }
    Ok(ArchInfinity { a: params.delta / (1.0 - beta_sum), b })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Autocovariance {
    /// Biased sample autocovariances of `X^2` at lags `0..=max_lag`.
    pub acov: Vec<f64>,
    /// `acov[0] + 2 * sum_{1<=k<=K} acov[k]` for each `K`.
    pub partial_sums: Vec<f64>,
}

pub fn autocovariance_x2(path: &PathSample, max_lag: usize) -> Result<Autocovariance> {
    let n = path.len();
    if max_lag * 10 >= n {
        return Err(Error::InvalidArgument(format!(
            "max_lag must be < n/10 (n = {n}, max_lag = {max_lag})"
        )));
    }
    let y: Vec<f64> = path.x.iter().map(|x| x * x).collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let acov: Vec<f64> = (0..=max_lag)
        .map(|k| {
            centered[..n - k]
                .iter()
                .zip(&centered[k..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect();
    let mut partial_sums = Vec::with_capacity(acov.len());
    let mut acc = acov[0];
    partial_sums.push(acc);
    for c in &acov[1..] {
        acc += 2.0 * c;
        partial_sums.push(acc);
    }
    Ok(Autocovariance { acov, partial_sums })
}

/// Independent paths of equal length, each from its own derived seed.
pub fn independent_blocks(
    params: &GarchParams,
    model: &InnovationModel,
    block_len: usize,
    blocks: usize,
    burn_in: usize,
    master_seed: u64,
) -> Result<Vec<PathSample>> {
    (0..blocks as u64)
        .map(|b| {
            simulate(params, model, block_len, burn_in, rng::cell_seed(master_seed, block_len as u64, b))
        })
        .collect()
}

/// Across-block sample variance of `sum_i 1/sigma_i`, divided by the block
/// length. Bounded in the block length when the centered sums grow like `n`
/// in mean square.
pub fn inverse_sigma_variance(blocks: &[PathSample]) -> Result<f64> {
    if blocks.len() < 100 {
        return Err(Error::InsufficientData(format!(
            "need >= 100 independent blocks, got {}",
            blocks.len()
        )));
    }
    let len = blocks[0].len();
    if len == 0 || blocks.iter().any(|b| b.len() != len) {
        return Err(Error::InvalidArgument("blocks must be non-empty and of equal length".into()));
    }
    let sums: Vec<f64> = blocks
        .iter()
        .map(|b| b.sigma2.iter().map(|s2| 1.0 / s2.sqrt()).sum())
        .collect();
    let k = sums.len() as f64;
    let mean = sums.iter().sum::<f64>() / k;
    let var = sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(var / len as f64)
}
