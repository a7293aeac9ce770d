//! `garch-bk`: simulate GARCH paths, build marginal models, measure
//! Bahadur-Kiefer remainders and run rate experiments.
//!
//! Exit codes: 0 success, 2 usage error, 3 numeric or stationarity error,
//! 4 I/O error.

mod plot;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use garch_bk::harness::{self, default_output_dir, write_atomic, ExperimentConfig, MarginalConfig, Summary};
use garch_bk::{
    arch_infinity_coeffs, bk_remainder, build_marginal, garch, is_stationary, lyapunov_exponent, Error, GarchParams,
    InnovationSpec, MarginalModel, PathSample,
};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "garch-bk", version, about = "Bahadur-Kiefer remainders of GARCH sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a GARCH path and write it as CSV (k, x, sigma2)
    Simulate(SimulateArgs),
    /// Estimate the top Lyapunov exponent and the stationarity verdict
    Lyapunov(LyapunovArgs),
    /// Print the leading ARCH(infinity) coefficients
    Coeffs(CoeffsArgs),
    /// Build the stationary marginal model by Monte Carlo
    Marginal(MarginalArgs),
    /// Remainder statistics of a simulated path against a marginal model
    Bk(BkArgs),
    /// Run a rate experiment over a grid of sample sizes
    Experiment(ExperimentArgs),
    /// Summarize a results CSV
    Summarize(SummarizeArgs),
    /// Render a summary as an SVG figure
    Plot(PlotArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Family {
    Gaussian,
    StudentT,
}

/// Model given either by flags or by the `[params]` and `[innovation]`
/// tables of an experiment config.
#[derive(Args, Debug)]
struct ModelArgs {
    /// Experiment config (TOML) instead of model flags
    #[arg(long, conflicts_with_all = ["delta", "beta", "alpha", "innovation", "df"])]
    config: Option<PathBuf>,
    /// Intercept of the variance equation
    #[arg(long)]
    delta: Option<f64>,
    /// Coefficients on lagged variances, comma separated
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    beta: Vec<f64>,
    /// Coefficients on lagged squared observations, comma separated
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    alpha: Vec<f64>,
    /// Innovation family
    #[arg(long, value_enum, default_value = "gaussian")]
    innovation: Family,
    /// Degrees of freedom of the Student-t innovation (> 4)
    #[arg(long)]
    df: Option<f64>,
}

impl ModelArgs {
    fn resolve(&self) -> garch_bk::Result<(GarchParams, InnovationSpec)> {
        if let Some(path) = &self.config {
            let c = ExperimentConfig::load(path)?;
            return Ok((c.params, c.innovation));
        }
        let delta = self.delta.ok_or_else(|| usage("--delta is required unless --config is given"))?;
        if self.alpha.is_empty() {
            return Err(usage("--alpha is required unless --config is given"));
        }
        let params = GarchParams::new(delta, self.beta.clone(), self.alpha.clone())?;
        let spec = match self.innovation {
            Family::Gaussian => InnovationSpec::gaussian(),
            Family::StudentT => {
                InnovationSpec::student_t(self.df.ok_or_else(|| usage("--df is required for student-t innovations"))?)
            }
        };
        spec.build()?;
        Ok((params, spec))
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Path length
    #[arg(long)]
    n: usize,
    /// Discarded steps before recording
    #[arg(long, default_value_t = garch::DEFAULT_BURN_IN)]
    burn_in: usize,
    /// Random seed
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV; a metadata file `<out>.json` is written next to it
    /// [default: $GARCH_BK_OUT_DIR/path.csv]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LyapunovArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Matrix products to average
    #[arg(long, default_value_t = garch::STATIONARITY_ITERATIONS)]
    iterations: usize,
    /// Random seed
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct CoeffsArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of coefficients
    #[arg(long = "terms", default_value_t = 50)]
    terms: usize,
}

#[derive(Args, Debug)]
struct MarginalArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Volatility draws in the mixture
    #[arg(short = 'M', long = "m", default_value_t = garch_bk::marginal::DEFAULT_DRAWS)]
    m: usize,
    /// Recursion steps between recorded draws
    #[arg(long, default_value_t = garch_bk::marginal::DEFAULT_GAP)]
    gap: usize,
    /// Build seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the grid x, F, f as CSV
    #[arg(long)]
    dump: Option<PathBuf>,
    /// Save the model in binary form for reuse
    #[arg(long)]
    save: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BkArgs {
    /// Path CSV written by `simulate`
    #[arg(long)]
    path: PathBuf,
    /// Marginal model saved by `marginal --save`
    #[arg(long)]
    marginal: PathBuf,
    /// Working interval for the general remainder
    #[arg(long, num_args = 2, value_names = ["Y0", "Y1"], default_values_t = [0.05, 0.95])]
    interval: Vec<f64>,
    /// Output JSON [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output directory [default: config value, else $GARCH_BK_OUT_DIR, else ./out]
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// Sample sizes, comma separated
    #[arg(long, value_delimiter = ',', conflicts_with = "config")]
    n_grid: Vec<usize>,
    /// Replications per sample size
    #[arg(long, conflicts_with = "config")]
    replications: Option<usize>,
    /// Master seed
    #[arg(long, conflicts_with = "config")]
    master_seed: Option<u64>,
    /// Working interval
    #[arg(long, num_args = 2, value_names = ["Y0", "Y1"], conflicts_with = "config")]
    interval: Vec<f64>,
    /// Volatility draws of the marginal model
    #[arg(short = 'M', long = "m", conflicts_with = "config")]
    m: Option<usize>,
    /// Thinning gap of the marginal model
    #[arg(long, conflicts_with = "config")]
    gap: Option<usize>,
}

#[derive(Args, Debug)]
struct SummarizeArgs {
    /// Results CSV
    #[arg(long = "in")]
    input: PathBuf,
    /// Output JSON [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Summary JSON written by `summarize` or `experiment`
    #[arg(long)]
    input: PathBuf,
    /// Figure kind
    #[arg(long, value_enum, default_value = "loglog-rate")]
    kind: plot::Kind,
    /// Draw a reference line of slope -1/4
    #[arg(long)]
    reference_slope: bool,
    /// Statistic to plot
    #[arg(long, default_value = "r_general")]
    statistic: String,
    /// Output SVG [default: $GARCH_BK_OUT_DIR/<kind>.svg]
    #[arg(long)]
    out: Option<PathBuf>,
}

fn usage(msg: &str) -> Error {
    Error::InvalidArgument(msg.to_string())
}

/// Parameters and seed of a simulated path, stored beside its CSV.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathMeta {
    params: GarchParams,
    innovation: InnovationSpec,
    seed: u64,
    burn_in: usize,
}

fn meta_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn json_line<T: Serialize>(value: &T) -> garch_bk::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn emit(text: &str, out: Option<&Path>) -> garch_bk::Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn ensure_parent(path: &Path) -> garch_bk::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> garch_bk::Result<()> {
    let (params, spec) = args.model.resolve()?;
    let model = spec.build()?;
    let out = args.out.clone().unwrap_or_else(|| default_output_dir().join("path.csv"));
    let path = garch::simulate(&params, &model, args.n, args.burn_in, args.seed)?;
    let mut buf = Vec::new();
    path.write_csv(&mut buf)?;
    let meta = PathMeta { params, innovation: spec, seed: args.seed, burn_in: args.burn_in };
    ensure_parent(&out)?;
    write_atomic(&meta_path(&out), json_line(&meta)?.as_bytes())?;
    write_atomic(&out, &buf)?;
    Ok(())
}

#[derive(Serialize)]
struct LyapunovOutput {
    gamma_hat: f64,
    std_error: f64,
    iterations: usize,
    verdict: garch_bk::Verdict,
    margin: f64,
}

fn lyapunov(args: &LyapunovArgs) -> garch_bk::Result<()> {
    let (params, spec) = args.model.resolve()?;
    let model = spec.build()?;
    let est = lyapunov_exponent(&params, &model, args.iterations, args.seed)?;
    let report = is_stationary(&params, &model);
    let out = LyapunovOutput {
        gamma_hat: est.gamma_hat,
        std_error: est.std_error,
        iterations: est.iterations,
        verdict: report.verdict,
        margin: report.margin,
    };
    emit(&json_line(&out)?, None)
}

fn coeffs(args: &CoeffsArgs) -> garch_bk::Result<()> {
    let (params, _) = args.model.resolve()?;
    emit(&json_line(&arch_infinity_coeffs(&params, args.terms)?)?, None)
}

fn marginal(args: &MarginalArgs) -> garch_bk::Result<()> {
    let (params, spec) = args.model.resolve()?;
    let model = spec.build()?;
    let m = build_marginal(&params, &model, args.m, args.gap, args.seed)?;
    if let Some(path) = &args.dump {
        let mut buf = Vec::new();
        m.write_grid_csv(&mut buf)?;
        ensure_parent(path)?;
        write_atomic(path, &buf)?;
    }
    if let Some(path) = &args.save {
        let mut buf = Vec::new();
        m.write_binary(&mut buf)?;
        ensure_parent(path)?;
        write_atomic(path, &buf)?;
    }
    emit(&json_line(&m.summary())?, None)
}

fn bk(args: &BkArgs) -> garch_bk::Result<()> {
    let interval = (args.interval[0], args.interval[1]);
    let mut path = PathSample::read_csv(&args.path)?;
    let meta_file = meta_path(&args.path);
    if meta_file.exists() {
        let text = fs::read_to_string(&meta_file)?;
        let meta: PathMeta = serde_json::from_str(&text)
            .map_err(|e| Error::Malformed { path: meta_file.clone(), reason: e.to_string() })?;
        path.params = Some(meta.params);
        path.seed = meta.seed;
        path.burn_in = meta.burn_in;
    }
    let m = MarginalModel::load(&args.marginal)?;
    let result = bk_remainder(&path, &m, interval)?;
    emit(&json_line(&result)?, args.out.as_deref())
}

fn experiment_config(args: &ExperimentArgs) -> garch_bk::Result<ExperimentConfig> {
    let mut config = match &args.model.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let (params, innovation) = args.model.resolve()?;
            let defaults = MarginalConfig::default();
            let interval = match args.interval.as_slice() {
                [] => [0.05, 0.95],
                [a, b] => [*a, *b],
                _ => return Err(usage("--interval takes two values")),
            };
            let config = ExperimentConfig {
                n_grid: args.n_grid.clone(),
                replications: args.replications.ok_or_else(|| usage("--replications is required without --config"))?,
                master_seed: args.master_seed.ok_or_else(|| usage("--master-seed is required without --config"))?,
                interval,
                burn_in: None,
                output_dir: None,
                params,
                innovation,
                marginal: MarginalConfig { m: args.m.unwrap_or(defaults.m), gap: args.gap.unwrap_or(defaults.gap), seed: None },
            };
            config.validate().map_err(|e| match e {
                Error::Config(msg) => usage(&msg),
                other => other,
            })?;
            config
        }
    };
    if let Some(dir) = &args.out_dir {
        config.output_dir = Some(dir.clone());
    }
    Ok(config)
}

fn experiment(args: &ExperimentArgs) -> garch_bk::Result<()> {
    let config = experiment_config(args)?;
    let result = harness::run_experiment(&config, args.threads)?;
    eprintln!(
        "wrote {} and {} ({} rows, {:.1}s)",
        result.results_path.display(),
        result.summary_path.display(),
        result.rows.len(),
        result.elapsed_secs
    );
    Ok(())
}

fn summarize(args: &SummarizeArgs) -> garch_bk::Result<()> {
    let summary = harness::summarize(&args.input)?;
    emit(&summary.to_json()?, args.out.as_deref())
}

fn plot(args: &PlotArgs) -> garch_bk::Result<()> {
    let summary = Summary::load(&args.input)?;
    let svg = plot::render(&summary, args.kind, &args.statistic, args.reference_slope)?;
    let out = args.out.clone().unwrap_or_else(|| default_output_dir().join(format!("{}.svg", args.kind.name())));
    ensure_parent(&out)?;
    write_atomic(&out, svg.as_bytes())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        3
    } else if e.is_io() {
        4
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Lyapunov(a) => lyapunov(a),
        Command::Coeffs(a) => coeffs(a),
        Command::Marginal(a) => marginal(a),
        Command::Bk(a) => bk(a),
        Command::Experiment(a) => experiment(a),
        Command::Summarize(a) => summarize(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
