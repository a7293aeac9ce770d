//! Experiment orchestration.
//!
//! A configuration names the model, the grid of sample sizes and the number
//! of replications. Every `(n, rep)` cell gets its own path seed derived from
//! the master seed, all cells share one read-only marginal model, and results
//! are written in canonical `(n, rep)` order so the CSV is byte-stable
//! whatever the thread count.
//!
//! Results CSV columns: `n, rep, seed, r_uniform, r_general, sup_beta,
//! oscillation, lil`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bahadur::{self, BkResult, RateConstants, DEFAULT_INTERVAL};
use crate::error::{Error, Result};
use crate::garch::{self, GarchParams, StationarityReport, Verdict, DEFAULT_BURN_IN};
use crate::innovations::{InnovationModel, InnovationSpec};
use crate::marginal::{self, MarginalModel, DEFAULT_DRAWS, DEFAULT_GAP, MIN_DRAWS};
use crate::rng;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "GARCH_BK_OUT_DIR";
pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CSV_COLUMNS: [&str; 8] = ["n", "rep", "seed", "r_uniform", "r_general", "sup_beta", "oscillation", "lil"];
const INSUFFICIENT_NOTE: &str = "insufficient n values: a rate fit needs at least 3 distinct n";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalConfig {
    #[serde(default = "default_draws")]
    pub m: usize,
    #[serde(default = "default_gap")]
    pub gap: usize,
    /// Build seed; derived from the master seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_draws() -> usize {
    DEFAULT_DRAWS
}

fn default_gap() -> usize {
    DEFAULT_GAP
}

fn default_interval() -> [f64; 2] {
    [DEFAULT_INTERVAL.0, DEFAULT_INTERVAL.1]
}

impl Default for MarginalConfig {
    fn default() -> Self {
        Self { m: DEFAULT_DRAWS, gap: DEFAULT_GAP, seed: None }
    }
}

/// Experiment description, read from TOML. Unknown keys are rejected.
///
/// ```toml
/// n_grid = [4096, 16384, 65536]
/// replications = 100
/// master_seed = 2024
/// interval = [0.05, 0.95]
///
/// [params]
/// delta = 0.1
/// beta = [0.8]
/// alpha = [0.1]
///
/// [innovation]
/// family = "gaussian"
///
/// [marginal]
/// m = 100000
/// gap = 50
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default = "default_interval")]
    pub interval: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub params: GarchParams,
    pub innovation: InnovationSpec,
    #[serde(default)]
    pub marginal: MarginalConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(reason) => Error::Config(format!("{}: {reason}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.innovation.build()?;
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid must not be empty".into()));
        }
        if self.n_grid.iter().any(|&n| n < 16) {
            return Err(Error::Config("every n in n_grid must be >= 16".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n_grid must be strictly increasing".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        let [y0, y1] = self.interval;
        if !(y0 > 0.0 && y0 < y1 && y1 < 1.0) {
            return Err(Error::Config(format!("interval must satisfy 0 < y0 < y1 < 1, got [{y0}, {y1}]")));
        }
        if self.marginal.m < MIN_DRAWS {
            return Err(Error::Config(format!("marginal.m must be >= {MIN_DRAWS}")));
        }
        if self.marginal.gap == 0 {
            return Err(Error::Config("marginal.gap must be >= 1".into()));
        }
        Ok(())
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(DEFAULT_BURN_IN)
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.interval[0], self.interval[1])
    }

    pub fn marginal_seed(&self) -> u64 {
        self.marginal.seed.unwrap_or_else(|| rng::marginal_seed(self.master_seed))
    }

    pub fn cell_seed(&self, n: usize, rep: usize) -> u64 {
        rng::cell_seed(self.master_seed, n as u64, rep as u64)
    }

    /// `output_dir`, else `$GARCH_BK_OUT_DIR`, else `./out`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(default_output_dir)
    }

    pub fn build_marginal(&self) -> Result<MarginalModel> {
        let model = self.innovation.build()?;
        marginal::build_marginal(&self.params, &model, self.marginal.m, self.marginal.gap, self.marginal_seed())
    }
}

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

/// One line of the results CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub r_uniform: f64,
    pub r_general: f64,
    pub sup_beta: f64,
    pub oscillation: f64,
    pub lil: f64,
}

impl CsvRow {
    pub fn new(rep: usize, r: &BkResult) -> Self {
        Self {
            n: r.n,
            rep,
            seed: r.seed,
            r_uniform: r.r_uniform,
            r_general: r.r_general,
            sup_beta: r.sup_beta,
            oscillation: r.oscillation,
            lil: r.lil,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub rep: usize,
    pub result: BkResult,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    pub summary: Summary,
    pub config: ExperimentConfig,
    pub stationarity: StationarityReport,
    pub marginal_seed: u64,
    pub results_path: PathBuf,
    pub summary_path: PathBuf,
    pub elapsed_secs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Self {
        Self {
            q1: bahadur::quantile_linear(values, 0.25),
            median: bahadur::median(values),
            q3: bahadur::quantile_linear(values, 0.75),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub r_uniform_over_r_n: f64,
    pub r_general_over_r_n: f64,
    pub oscillation_over_b_n_star: f64,
    pub oscillation_over_b_n: f64,
    pub sup_beta_over_sqrt_loglog: f64,
}

/// Replication summary at one sample size. Ratios use medians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerN {
    pub n: usize,
    pub replications: usize,
    pub rates: RateConstants,
    pub sqrt_loglog: f64,
    pub stats: BTreeMap<String, Quartiles>,
    pub ratios: Ratios,
}

impl PerN {
    pub fn median(&self, statistic: &str) -> Option<f64> {
        self.stats.get(statistic).map(|q| q.median)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub exponent: f64,
    pub intercept: f64,
}

/// Statistics whose medians get a log-log rate fit.
pub const FITTED: [&str; 3] = ["r_uniform", "r_general", "oscillation"];
/// Statistic reported as the headline exponent.
pub const PRIMARY_STATISTIC: &str = "r_general";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub statistic: String,
    pub exponent: Option<f64>,
    pub intercept: Option<f64>,
    pub n_values: Vec<usize>,
    pub per_n: Vec<PerN>,
    pub fits: BTreeMap<String, FitSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Summary {
    /// `(n, median)` pairs of one statistic.
    pub fn medians(&self, statistic: &str) -> Option<Vec<(usize, f64)>> {
        self.per_n.iter().map(|p| p.median(statistic).map(|m| (p.n, m))).collect()
    }

    pub fn fit(&self, statistic: &str) -> Option<FitSummary> {
        self.fits.get(statistic).copied()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Malformed { path: path.to_path_buf(), reason: e.to_string() })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Per-`n` quartiles, ratio tables and rate fits of result rows.
pub fn summarize_rows(rows: &[CsvRow]) -> Result<Summary> {
    let mut by_n: BTreeMap<usize, Vec<&CsvRow>> = BTreeMap::new();
    for r in rows {
        by_n.entry(r.n).or_default().push(r);
    }
    if by_n.is_empty() {
        return Err(Error::InsufficientData("no result rows".into()));
    }
    let mut per_n = Vec::with_capacity(by_n.len());
    for (&n, group) in &by_n {
        let rates = RateConstants::new(n)?;
        let column = |f: fn(&CsvRow) -> f64| group.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let mut stats = BTreeMap::new();
        stats.insert("r_uniform".to_string(), Quartiles::of(&column(|r| r.r_uniform)));
        stats.insert("r_general".to_string(), Quartiles::of(&column(|r| r.r_general)));
        stats.insert("sup_beta".to_string(), Quartiles::of(&column(|r| r.sup_beta)));
        stats.insert("oscillation".to_string(), Quartiles::of(&column(|r| r.oscillation)));
        stats.insert("lil".to_string(), Quartiles::of(&column(|r| r.lil)));
        let sqrt_loglog = (n as f64).ln().ln().sqrt();
        let osc = stats["oscillation"].median;
        let ratios = Ratios {
            r_uniform_over_r_n: stats["r_uniform"].median / rates.r_n,
            r_general_over_r_n: stats["r_general"].median / rates.r_n,
            oscillation_over_b_n_star: osc / rates.b_n_star,
            oscillation_over_b_n: osc / rates.b_n,
            sup_beta_over_sqrt_loglog: stats["sup_beta"].median / sqrt_loglog,
        };
        per_n.push(PerN { n, replications: group.len(), rates, sqrt_loglog, stats, ratios });
    }

    let n_values: Vec<usize> = by_n.keys().copied().collect();
    let mut fits = BTreeMap::new();
    let mut note = None;
    if n_values.len() >= 3 {
        for stat in FITTED {
            let pts: Vec<(usize, f64)> = per_n.iter().map(|p| (p.n, p.stats[stat].median)).collect();
            match bahadur::rate_fit(&pts) {
                Ok(fit) => {
                    fits.insert(stat.to_string(), FitSummary { exponent: fit.exponent, intercept: fit.intercept });
                }
                Err(e) => note = Some(format!("{stat}: {e}")),
            }
        }
    } else {
        note = Some(INSUFFICIENT_NOTE.to_string());
    }
    let primary = fits.get(PRIMARY_STATISTIC).copied();
    Ok(Summary {
        statistic: PRIMARY_STATISTIC.to_string(),
        exponent: primary.map(|f| f.exponent),
        intercept: primary.map(|f| f.intercept),
        n_values,
        per_n,
        fits,
        note,
    })
}

/// Reads a results CSV, checking its header and every row.
pub fn read_results(path: &Path) -> Result<Vec<CsvRow>> {
    let malformed = |reason: String| Error::Malformed { path: path.to_path_buf(), reason };
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers().map_err(|e| malformed(e.to_string()))?.clone();
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(malformed(format!(
            "expected columns {}, found {}",
            CSV_COLUMNS.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<CsvRow>().enumerate() {
        let row = rec.map_err(|e| malformed(format!("row {}: {e}", i + 1)))?;
        let values = [row.r_uniform, row.r_general, row.sup_beta, row.oscillation, row.lil];
        if row.n < 16 || values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(malformed(format!("row {}: n must be >= 16 and statistics finite and non-negative", i + 1)));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Summary of a results CSV on disk.
pub fn summarize(path: &Path) -> Result<Summary> {
    summarize_rows(&read_results(path)?)
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so a failure never leaves a partial file behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = parent_dir(path);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// Remainder statistics of one cell. Depends only on the configuration, the
/// marginal and `(n, rep)`.
pub fn run_cell(config: &ExperimentConfig, model: &InnovationModel, m: &MarginalModel, n: usize, rep: usize) -> Result<BkResult> {
    let seed = config.cell_seed(n, rep);
    let path = garch::simulate_unchecked(&config.params, model, n, config.burn_in(), seed)?;
    bahadur::bk_remainder(&path, m, config.interval())
}

/// Runs every `(n, rep)` cell and writes `results.csv` and `summary.json`
/// into the output directory.
///
/// `threads` sets the worker-pool width: `1` runs serially, `0` uses one
/// worker per core.
pub fn run_experiment(config: &ExperimentConfig, threads: usize) -> Result<ExperimentResult> {
    let start = Instant::now();
    config.validate()?;
    let model = config.innovation.build()?;
    let stationarity = garch::is_stationary(&config.params, &model);
    if stationarity.verdict != Verdict::Stationary {
        return Err(Error::NonStationary { gamma: stationarity.gamma_hat, std_error: stationarity.std_error });
    }

    let out_dir = config.resolved_output_dir();
    fs::create_dir_all(&out_dir)?;
    let results_path = out_dir.join(RESULTS_FILE);
    let summary_path = out_dir.join(SUMMARY_FILE);
    let tmp = tempfile::NamedTempFile::new_in(&out_dir)?;

    let marginal = config.build_marginal()?;
    let pool = if threads == 1 {
        None
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
        Some(pool)
    };

    let mut writer = csv::Writer::from_writer(BufWriter::new(tmp.as_file()));
    let mut rows = Vec::with_capacity(config.n_grid.len() * config.replications);
    let mut csv_rows = Vec::with_capacity(rows.capacity());
    for &n in &config.n_grid {
        let cell = |rep: usize| run_cell(config, &model, &marginal, n, rep);
        let results: Vec<BkResult> = match &pool {
            None => (0..config.replications).map(cell).collect::<Result<_>>()?,
            Some(pool) => pool.install(|| (0..config.replications).into_par_iter().map(cell).collect::<Result<_>>())?,
        };
        for (rep, result) in results.into_iter().enumerate() {
            let row = CsvRow::new(rep, &result);
            writer.serialize(&row)?;
            csv_rows.push(row);
            rows.push(ExperimentRow { rep, result });
        }
        writer.flush()?;
    }
    drop(writer);

    let summary = summarize_rows(&csv_rows)?;
    write_atomic(&summary_path, summary.to_json()?.as_bytes())?;
    tmp.persist(&results_path).map_err(|e| Error::Io(e.error))?;

    Ok(ExperimentResult {
        rows,
        summary,
        config: config.clone(),
        stationarity,
        marginal_seed: marginal.seed(),
        results_path,
        summary_path,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}
