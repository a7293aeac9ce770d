//! Order statistics, empirical distribution and quantile functions, and the
//! processes built from them.
//!
//! All four processes are step functions in one argument and continuous
//! monotone functions of the law in the other, so their suprema are attained
//! at one-sided limits at the jump points. Evaluations below always include
//! both limits.

use std::collections::VecDeque;
use std::io::Write;

use crate::bahadur::RateConstants;
use crate::error::{Error, Result};
use crate::law::Law;

/// Order statistics `X_{1:n} <= .. <= X_{n:n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SortedSample {
    values: Vec<f64>,
}

impl SortedSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData("empty sample".into()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("sample contains NaN".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `X_{k:n}`, 1-based.
    pub fn order_stat(&self, k: usize) -> f64 {
        self.values[k - 1]
    }

    /// `#{i : X_i <= x}`.
    pub fn count_le(&self, x: f64) -> usize {
        self.values.partition_point(|&v| v <= x)
    }

    /// `#{i : X_i < x}`.
    pub fn count_lt(&self, x: f64) -> usize {
        self.values.partition_point(|&v| v < x)
    }

    /// `F_n(x) = n^{-1} #{i : X_i <= x}`, right-continuous.
    pub fn ecdf(&self, x: f64) -> f64 {
        self.count_le(x) as f64 / self.len() as f64
    }

    /// `Q_n(y) = X_{ceil(n y):n}` for `y` in `(0, 1]`, left-continuous.
    pub fn equantile(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y <= 1.0) {
            return Err(Error::InvalidArgument(format!("quantile level must lie in (0,1], got {y}")));
        }
        Ok(self.order_stat(quantile_rank(self.len(), y)))
    }
}

/// `ceil(n y)` clamped to `1..=n`, reading a level that rounds to `k/n` as
/// exactly `k/n`.
pub fn quantile_rank(n: usize, y: f64) -> usize {
    let nf = n as f64;
    let mut k = (nf * y).ceil().max(1.0).min(nf) as usize;
    if k > 1 && (k - 1) as f64 / nf >= y {
        k -= 1;
    }
    k
}

/// A process evaluated on a grid. Repeated grid points carry the left and
/// right limits at a jump.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessEvaluation {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub sup_abs: f64,
    pub n: usize,
}

impl ProcessEvaluation {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["grid", "value"])?;
        for (g, v) in self.grid.iter().zip(&self.values) {
            w.write_record([g.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_sorted(grid: &[f64]) -> Result<()> {
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument("evaluation grid must be sorted".into()));
    }
    Ok(())
}

/// `beta_n(x) = sqrt(n) (F_n(x) - F(x))` on `grid`. The supremum also runs
/// over both one-sided limits at every order statistic, so it equals
/// `sqrt(n)` times the Kolmogorov-Smirnov distance.
pub fn empirical_process<L: Law>(sample: &SortedSample, law: &L, grid: &[f64]) -> Result<ProcessEvaluation> {
    check_sorted(grid)?;
    let n = sample.len();
    let rn = (n as f64).sqrt();
    let values: Vec<f64> = grid.iter().map(|&x| rn * (sample.ecdf(x) - law.cdf(x))).collect();
    let sup_grid = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sup = sup_grid.max(rn * ks_distance(sample, law));
    Ok(ProcessEvaluation { grid: grid.to_vec(), values, sup_abs: sup, n })
}

/// Classical `sup_x |F_n(x) - F(x)|` for a continuous `F`.
pub fn ks_distance<L: Law>(sample: &SortedSample, law: &L) -> f64 {
    let nf = sample.len() as f64;
    let v = sample.values();
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < v.len() {
        // ties: the jump at v[i] spans all equal values
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        let f = law.cdf(v[i]);
        d = d.max((f - i as f64 / nf).abs()).max(((j + 1) as f64 / nf - f).abs());
        i = j + 1;
    }
    d
}

/// `q_n(y) = sqrt(n) (Q(y) - Q_n(y))` on `y_grid`. The supremum also runs
/// over both limits at every `i/n` where `Q` is finite.
pub fn quantile_process<L: Law>(sample: &SortedSample, law: &L, y_grid: &[f64]) -> Result<ProcessEvaluation> {
    check_sorted(y_grid)?;
    let n = sample.len();
    let rn = (n as f64).sqrt();
    let values = y_grid
        .iter()
        .map(|&y| Ok(rn * (law.quantile(y) - sample.equantile(y)?)))
        .collect::<Result<Vec<f64>>>()?;
    let mut sup = values.iter().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..=n {
        let q = law.quantile(i as f64 / n as f64);
        if !q.is_finite() {
            continue;
        }
        if i >= 1 {
            sup = sup.max((rn * (q - sample.order_stat(i))).abs());
        }
        if i < n {
            sup = sup.max((rn * (q - sample.order_stat(i + 1))).abs());
        }
    }
    Ok(ProcessEvaluation { grid: y_grid.to_vec(), values, sup_abs: sup, n })
}

/// Uniform empirical process `alpha_n(x) = sqrt(n) (E_n(x) - x)` and uniform
/// quantile process `gamma_n(y) = sqrt(n) (y - G_n(y))` of a sample on
/// `[0, 1]`, each evaluated at all of its jump limits.
pub fn uniform_processes(u: &[f64]) -> Result<(ProcessEvaluation, ProcessEvaluation)> {
    if let Some(v) = u.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
        return Err(Error::InvalidArgument(format!("uniform sample value {v} outside [0,1]")));
    }
    let sample = SortedSample::from_slice(u)?;
    let n = sample.len();
    let nf = n as f64;
    let rn = nf.sqrt();
    let v = sample.values();

    let mut grid = Vec::with_capacity(2 * n + 2);
    let mut values = Vec::with_capacity(2 * n + 2);
    grid.push(0.0);
    values.push(rn * (sample.ecdf(0.0) - 0.0));
    for &x in v {
        grid.push(x);
        values.push(rn * (sample.count_lt(x) as f64 / nf - x));
        grid.push(x);
        values.push(rn * (sample.count_le(x) as f64 / nf - x));
    }
    grid.push(1.0);
    values.push(0.0);
    let alpha = finish(grid, values, n);

    let mut grid = Vec::with_capacity(2 * n + 2);
    let mut values = Vec::with_capacity(2 * n + 2);
    for i in 0..=n {
        let y = i as f64 / nf;
        if i >= 1 {
            grid.push(y);
            values.push(rn * (y - v[i - 1]));
        }
        if i < n {
            grid.push(y);
            values.push(rn * (y - v[i]));
        }
    }
    let gamma = finish(grid, values, n);
    Ok((alpha, gamma))
}

fn finish(grid: Vec<f64>, values: Vec<f64>, n: usize) -> ProcessEvaluation {
    let sup_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ProcessEvaluation { grid, values, sup_abs, n }
}

/// Oscillation of the uniform empirical process on the lattice of spacing
/// `b_n^* = n^{-1/2} b_n`:
/// `max_{|j| <= d_n} max_i |E_n((i+j) b) - E_n(i b) - j b|` with
/// `d_n = [lambda_n / b] + 1`, over lattice points in `[0, 1]`.
pub fn oscillation_statistic<L: Law>(sample: &SortedSample, law: &L) -> Result<f64> {
    let n = sample.len();
    let u: Vec<f64> = sample.values().iter().map(|&x| law.cdf(x)).collect();
    oscillation_uniform(&u, n)
}

/// [`oscillation_statistic`] for an already transformed, sorted sample.
pub fn oscillation_uniform(u_sorted: &[f64], n: usize) -> Result<f64> {
    let rc = RateConstants::new(n)?;
    Ok(oscillation_with(u_sorted, rc.b_n_star, rc.lambda_n))
}

/// Lattice oscillation with explicit spacing and window width.
pub fn oscillation_with(u_sorted: &[f64], spacing: f64, window: f64) -> f64 {
    let n = u_sorted.len() as f64;
    let points = (1.0 / spacing).floor() as usize + 1;
    let lags = (window / spacing).floor() as usize + 1;

    let mut deviations = Vec::with_capacity(points);
    let mut count = 0usize;
    for i in 0..points {
        let t = i as f64 * spacing;
        while count < u_sorted.len() && u_sorted[count] <= t {
            count += 1;
        }
        deviations.push(count as f64 / n - t);
    }

    // sliding max/min over the trailing window [j - lags, j]
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut best: f64 = 0.0;
    for (j, &dj) in deviations.iter().enumerate() {
        while maxq.back().is_some_and(|&k| deviations[k] <= dj) {
            maxq.pop_back();
        }
        maxq.push_back(j);
        while minq.back().is_some_and(|&k| deviations[k] >= dj) {
            minq.pop_back();
        }
        minq.push_back(j);
        while maxq.front().is_some_and(|&k| k + lags < j) {
            maxq.pop_front();
        }
        while minq.front().is_some_and(|&k| k + lags < j) {
            minq.pop_front();
        }
        let hi = deviations[*maxq.front().unwrap()];
        let lo = deviations[*minq.front().unwrap()];
        best = best.max(hi - dj).max(dj - lo);
    }
    best
}

/// `(log log n)^{-1/2} sup |process|`.
pub fn lil_statistic(eval: &ProcessEvaluation, n: usize) -> Result<f64> {
    lil_normalize(eval.sup_abs, n)
}

pub fn lil_normalize(sup_abs: f64, n: usize) -> Result<f64> {
    if n < 16 {
        return Err(Error::InvalidArgument(format!("LIL normalization needs n >= 16, got {n}")));
    }
    Ok(sup_abs / (n as f64).ln().ln().sqrt())
}
