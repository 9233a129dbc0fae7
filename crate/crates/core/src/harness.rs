//! Command-line experiments, batch sweeps and report formatting.
//!
//! Every report is assembled in memory and written in one step (atomic
//! rename when writing to a file), so a failed run leaves no partial output.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    kl_scaled_gaussian, lossy_distribution, max_c_offset, pinsker_tv_bound, sample_outcomes, tv_monte_carlo,
    GaussianEnsembleSpec,
};
use crate::error::{Error, Result};
use crate::linalg::{sample_gaussian_matrix, sample_haar_unitary, ComplexMatrix, Seed};
use crate::loss::{row_norm_correlation, row_norm_product, LossModel};
use crate::permanent::{permanent, permanent_parallel, MAX_GRAY_SIDE};
use crate::reduction::{epsilon_prime_budget, recover_with_options, NoiseSpec, ReductionOptions};
use crate::states::factorial;

/// Environment variable that replaces `--seed` when set.
pub const SEED_ENV: &str = "LOSSYBOSON_SEED";

#[derive(Debug, Clone, Parser)]
#[command(name = "lossyboson", version, about = "Lossy BosonSampling permanents, functionals and recovery experiments")]
pub struct ExperimentConfig {
    #[command(subcommand)]
    pub command: Command,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    Input,
    Dark,
    Shuffle,
    ShuffleMix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseChoice {
    None,
    Uniform,
    Adversarial,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Exact permanent of a JSON matrix or a seeded Gaussian matrix.
    Permanent(PermanentArgs),
    /// Lossy functional of a seeded Gaussian (or supplied) matrix.
    Phi(PhiArgs),
    /// Draws from the exact lossy output distribution of a Haar interferometer.
    Sample(SampleArgs),
    /// Recovers |Per(X)|^2 from noisy functional values.
    Reduce(ReduceArgs),
    /// Compares closed-form KL, Pinsker and Monte Carlo TV for scaled Gaussians.
    #[command(name = "verify-lemma1")]
    ScaledGaussian(ScaledGaussianArgs),
    /// Runs a batch of reduce configurations.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PermanentArgs {
    #[arg(long, conflicts_with_all = ["n", "seed"])]
    pub matrix_file: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Split the Gray-code walk into this many parallel segments.
    #[arg(long)]
    pub parallel: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PhiArgs {
    #[arg(long, value_enum)]
    pub model: ModelChoice,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: Option<usize>,
    /// Mixture probabilities p_0,..,p_k (shuffle-mix only).
    #[arg(long, value_delimiter = ',')]
    pub probs: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub matrix_file: Option<PathBuf>,
    /// Also report the sample correlation between the row-norm product and
    /// the input-loss functional over this many Gaussian draws.
    #[arg(long)]
    pub correlation_draws: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// One reduce configuration; also the element type of sweep config files.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    #[serde(default = "default_k")]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = ModelChoice::Input)]
    #[serde(default = "default_model")]
    pub model: ModelChoice,
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub probs: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = NoiseChoice::None)]
    #[serde(default = "default_noise")]
    pub noise: NoiseChoice,
    #[arg(long, default_value_t = 0.1)]
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.2)]
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Oracle error bound in units of n!; defaults to the budget for (n, k, epsilon, delta).
    #[arg(long)]
    #[serde(default)]
    pub epsilon_prime: Option<f64>,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
    /// Number of interpolation nodes (default degree + 1).
    #[arg(long)]
    #[serde(default)]
    pub nodes: Option<usize>,
    /// Number of independent trials (fresh X and noise per trial).
    #[arg(long, default_value_t = 1)]
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Ignored outside sweep files; must be "reduce" when present.
    #[arg(skip)]
    #[serde(default, skip_serializing)]
    pub subcommand: Option<String>,
}

fn default_k() -> usize {
    1
}
fn default_model() -> ModelChoice {
    ModelChoice::Input
}
fn default_noise() -> NoiseChoice {
    NoiseChoice::None
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_delta() -> f64 {
    0.2
}
fn default_trials() -> usize {
    1
}

#[derive(Debug, Clone, Args)]
pub struct ScaledGaussianArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub c: f64,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

impl ExperimentConfig {
    /// Replaces every `--seed` with `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        match &mut self.command {
            Command::Permanent(a) => {
                if a.matrix_file.is_none() {
                    a.seed = Some(seed);
                }
            }
            Command::Phi(a) => a.seed = seed,
            Command::Sample(a) => a.seed = seed,
            Command::Reduce(a) => a.seed = seed,
            Command::ScaledGaussian(a) => a.seed = seed,
            Command::Sweep(_) => {}
        }
    }

    /// Applies [`SEED_ENV`] if it is set.
    pub fn apply_env_seed(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            let seed = raw
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={raw} is not an unsigned 64-bit integer")))?;
            self.override_seed(seed);
        }
        Ok(())
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn check_photons(n: usize, what: &str) -> Result<()> {
    if n == 0 || n > MAX_GRAY_SIDE {
        return Err(config_err(format!("{what} must be in 1..={MAX_GRAY_SIDE}, got {n}")));
    }
    Ok(())
}

fn build_model(model: ModelChoice, k: Option<usize>, probs: Option<&[f64]>) -> Result<LossModel> {
    let built = match model {
        ModelChoice::ShuffleMix => {
            let probs = probs.ok_or_else(|| config_err("--model shuffle-mix needs --probs p0,..,pk"))?;
            let m = LossModel::shuffle_mixture(probs.to_vec()).map_err(|e| config_err(e.to_string()))?;
            if let Some(k) = k {
                if k != m.k {
                    return Err(config_err(format!("--k {k} does not match {} probabilities", probs.len())));
                }
            }
            m
        }
        _ if probs.is_some() => return Err(config_err("--probs only applies to --model shuffle-mix")),
        ModelChoice::Input => LossModel::input_loss(k.unwrap_or(1)),
        ModelChoice::Dark => LossModel::dark_counts(k.unwrap_or(1)),
        ModelChoice::Shuffle => LossModel::shuffle_exact(k.unwrap_or(1)),
    };
    Ok(built)
}

fn read_matrix(path: &Path) -> Result<ComplexMatrix> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("malformed matrix file {}: {e}", path.display())))
}

impl ReduceArgs {
    fn validate(&self) -> Result<(LossModel, NoiseSpec)> {
        if let Some(sub) = &self.subcommand {
            if sub != "reduce" {
                return Err(config_err(format!("sweep configs must all be reduce, found {sub:?}")));
            }
        }
        check_photons(self.n, "n")?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(config_err(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(config_err(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.trials == 0 {
            return Err(config_err("trials must be at least 1"));
        }
        let model = build_model(self.model, Some(self.k), self.probs.as_deref())?;
        if self.n + model.k > MAX_GRAY_SIDE {
            return Err(config_err(format!("n + k must not exceed {MAX_GRAY_SIDE}")));
        }
        let eps_prime = match self.epsilon_prime {
            Some(e) if !(e >= 0.0 && e.is_finite()) => {
                return Err(config_err(format!("epsilon-prime must be non-negative, got {e}")))
            }
            Some(e) => e,
            None => epsilon_prime_budget(self.n, model.k, self.epsilon, self.delta),
        };
        let noise = match self.noise {
            NoiseChoice::None => NoiseSpec::NONE,
            NoiseChoice::Uniform => NoiseSpec::uniform(eps_prime),
            NoiseChoice::Adversarial => NoiseSpec::adversarial(eps_prime),
        };
        if let Some(count) = self.nodes {
            if count < model.polynomial_degree() + 1 {
                return Err(config_err(format!(
                    "--nodes {count} is below degree + 1 = {}",
                    model.polynomial_degree() + 1
                )));
            }
        }
        Ok((model, noise))
    }
}

/// One row per (config, trial).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub trial: usize,
    pub estimate: f64,
    pub truth: f64,
    pub abs_err: f64,
    pub err_units_nfact: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub n: usize,
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<CellSummary>,
}

pub const CSV_HEADER: &str = "n,k,epsilon,delta,seed,trial,estimate,truth,abs_err,err_units_nfact,success";

/// 17 significant digits.
fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.n,
                r.k,
                fmt_float(r.epsilon),
                fmt_float(r.delta),
                r.seed,
                r.trial,
                fmt_float(r.estimate),
                fmt_float(r.truth),
                fmt_float(r.abs_err),
                fmt_float(r.err_units_nfact),
                r.success
            );
        }
        for s in &self.summary {
            match &s.error {
                Some(e) => {
                    let _ = writeln!(out, "# cell={} n={} k={} error={}", s.cell, s.n, s.k, e.replace('\n', " "));
                }
                None => {
                    let _ = writeln!(
                        out,
                        "# cell={} n={} k={} epsilon={} delta={} trials={} failures={} failure_rate={}",
                        s.cell,
                        s.n,
                        s.k,
                        fmt_float(s.epsilon),
                        fmt_float(s.delta),
                        s.trials,
                        s.failures,
                        fmt_float(s.failure_rate)
                    );
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => Ok(self.to_csv()),
            Format::Json => self.to_json(),
        }
    }
}

/// Seeds for trial `t` of a cell: `(X, reduction)`.
pub fn trial_seeds(seed: u64, trial: usize) -> (Seed, Seed) {
    let base = Seed::new(seed);
    (base.derive(2 * trial as u64), base.derive(2 * trial as u64 + 1))
}

/// Runs all trials of one reduce configuration.
pub fn run_cell(config: &ReduceArgs) -> Result<Vec<SweepRow>> {
    let (model, noise) = config.validate()?;
    let options = ReductionOptions { node_count: config.nodes };
    (0..config.trials)
        .map(|trial| {
            let (x_seed, run_seed) = trial_seeds(config.seed, trial);
            let x = sample_gaussian_matrix(config.n, config.n, x_seed);
            let report = recover_with_options(&x, &model, noise, config.epsilon, config.delta, run_seed, options)?;
            Ok(SweepRow {
                n: config.n,
                k: model.k,
                epsilon: config.epsilon,
                delta: config.delta,
                seed: config.seed,
                trial,
                estimate: report.estimate,
                truth: report.truth,
                abs_err: report.abs_error,
                err_units_nfact: report.error_units_nfact,
                success: report.abs_error <= config.epsilon * factorial(config.n),
            })
        })
        .collect()
}

/// Runs every configuration (up to `jobs` at a time) and assembles rows in
/// configuration order. A failing cell is recorded in the summary and the
/// sweep carries on.
pub fn sweep(configs: &[ReduceArgs], jobs: usize) -> Result<SweepReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| config_err(format!("cannot start {jobs} workers: {e}")))?;
    let results: Vec<Result<Vec<SweepRow>>> = pool.install(|| configs.par_iter().map(run_cell).collect());
    let mut report = SweepReport::default();
    for (cell, (config, result)) in configs.iter().zip(results).enumerate() {
        match result {
            Ok(rows) => {
                let failures = rows.iter().filter(|r| !r.success).count();
                report.summary.push(CellSummary {
                    cell,
                    n: config.n,
                    k: config.k,
                    epsilon: config.epsilon,
                    delta: config.delta,
                    trials: rows.len(),
                    failures,
                    failure_rate: failures as f64 / rows.len() as f64,
                    error: None,
                });
                report.rows.extend(rows);
            }
            Err(e) => report.summary.push(CellSummary {
                cell,
                n: config.n,
                k: config.k,
                epsilon: config.epsilon,
                delta: config.delta,
                trials: 0,
                failures: 0,
                failure_rate: f64::NAN,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(report)
}

/// Parses a sweep file: a JSON array of reduce configurations.
pub fn parse_sweep_config(text: &str) -> Result<Vec<ReduceArgs>> {
    let configs: Vec<ReduceArgs> =
        serde_json::from_str(text).map_err(|e| config_err(format!("malformed sweep config: {e}")))?;
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Serialize)]
struct PermanentOutput {
    n: usize,
    re: f64,
    im: f64,
    abs_squared: f64,
}

#[derive(Serialize)]
struct PhiOutput {
    model: LossModel,
    n: usize,
    k: usize,
    phi: f64,
    row_norm_product: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    row_norm_correlation: Option<f64>,
}

#[derive(Serialize)]
struct ScaledGaussianOutput {
    n: usize,
    k: usize,
    c: f64,
    trials: usize,
    seed: u64,
    kl: f64,
    pinsker_bound: f64,
    tv_estimate: f64,
    tv_stderr: f64,
    within_bound: bool,
    max_c_offset_at_delta_0_1: f64,
}

fn json_line<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn csv_unsupported(what: &str) -> Error {
    config_err(format!("{what} output is JSON only; drop --format csv"))
}

/// Executes one command and returns the rendered report.
pub fn render(config: &ExperimentConfig) -> Result<String> {
    match &config.command {
        Command::Permanent(args) => {
            let m = match (&args.matrix_file, args.n) {
                (Some(path), _) => read_matrix(path)?,
                (None, Some(n)) => {
                    check_photons(n, "n")?;
                    sample_gaussian_matrix(n, n, Seed::new(args.seed.unwrap_or(0)))
                }
                (None, None) => return Err(config_err("permanent needs --matrix-file or --n")),
            };
            if !m.is_square() || m.rows() == 0 || m.rows() > MAX_GRAY_SIDE {
                return Err(config_err(format!(
                    "permanent needs a square matrix of side 1..={MAX_GRAY_SIDE}, got {}x{}",
                    m.rows(),
                    m.cols()
                )));
            }
            if config.format == Format::Csv {
                return Err(csv_unsupported("permanent"));
            }
            let p = match args.parallel {
                Some(segments) => permanent_parallel(&m, segments)?,
                None => permanent(&m)?,
            };
            json_line(&PermanentOutput { n: m.rows(), re: p.re, im: p.im, abs_squared: p.abs_squared })
        }
        Command::Phi(args) => {
            check_photons(args.n, "n")?;
            if config.format == Format::Csv {
                return Err(csv_unsupported("phi"));
            }
            let model = build_model(args.model, args.k, args.probs.as_deref())?;
            let (rows, cols) = model.matrix_shape(args.n);
            if rows.max(cols) > MAX_GRAY_SIDE {
                return Err(config_err(format!("n + k must not exceed {MAX_GRAY_SIDE}")));
            }
            let a = match &args.matrix_file {
                Some(path) => {
                    let a = read_matrix(path)?;
                    if (a.rows(), a.cols()) != (rows, cols) {
                        return Err(config_err(format!(
                            "matrix is {}x{}, model needs {rows}x{cols}",
                            a.rows(),
                            a.cols()
                        )));
                    }
                    a
                }
                None => sample_gaussian_matrix(rows, cols, Seed::new(args.seed)),
            };
            let correlation = match args.correlation_draws {
                Some(d) if d < 2 => return Err(config_err("--correlation-draws must be at least 2")),
                Some(d) => Some(row_norm_correlation(args.n, model.k, d, Seed::new(args.seed).derive(1))?),
                None => None,
            };
            json_line(&PhiOutput {
                phi: model.evaluate(&a)?,
                row_norm_product: row_norm_product(&a),
                n: args.n,
                k: model.k,
                model,
                row_norm_correlation: correlation,
            })
        }
        Command::Sample(args) => {
            check_photons(args.n, "n")?;
            if args.m < args.n + args.k {
                return Err(config_err(format!("m = {} cannot hold n + k = {} photons", args.m, args.n + args.k)));
            }
            if args.draws == 0 {
                return Err(config_err("draws must be at least 1"));
            }
            let seed = Seed::new(args.seed);
            let u = sample_haar_unitary(args.m, seed.derive(0));
            let dist = lossy_distribution(&u, args.n, args.k)?;
            let mut out = String::new();
            for outcome in sample_outcomes(&dist, args.draws, seed.derive(1))? {
                let _ = writeln!(out, "{outcome}");
            }
            Ok(out)
        }
        Command::Reduce(args) => {
            if args.trials == 1 && config.format == Format::Json {
                let (model, noise) = args.validate()?;
                let (x_seed, run_seed) = trial_seeds(args.seed, 0);
                let x = sample_gaussian_matrix(args.n, args.n, x_seed);
                let options = ReductionOptions { node_count: args.nodes };
                json_line(&recover_with_options(&x, &model, noise, args.epsilon, args.delta, run_seed, options)?)
            } else {
                let rows = run_cell(args)?;
                let failures = rows.iter().filter(|r| !r.success).count();
                let report = SweepReport {
                    summary: vec![CellSummary {
                        cell: 0,
                        n: args.n,
                        k: args.k,
                        epsilon: args.epsilon,
                        delta: args.delta,
                        trials: rows.len(),
                        failures,
                        failure_rate: failures as f64 / rows.len() as f64,
                        error: None,
                    }],
                    rows,
                };
                report.render(config.format)
            }
        }
        Command::ScaledGaussian(args) => {
            let spec = GaussianEnsembleSpec { n: args.n, k: args.k, c: args.c };
            spec.validate().map_err(|e| config_err(e.to_string()))?;
            if args.trials < 10_000 {
                return Err(config_err("verify-lemma1 needs --trials >= 10000"));
            }
            if config.format == Format::Csv {
                return Err(csv_unsupported("verify-lemma1"));
            }
            let kl = kl_scaled_gaussian(args.n, args.k, args.c);
            let bound = pinsker_tv_bound(kl)?;
            let tv = tv_monte_carlo(spec, args.trials, Seed::new(args.seed))?;
            json_line(&ScaledGaussianOutput {
                n: args.n,
                k: args.k,
                c: args.c,
                trials: args.trials,
                seed: args.seed,
                kl,
                pinsker_bound: bound,
                tv_estimate: tv.estimate,
                tv_stderr: tv.stderr,
                within_bound: tv.estimate <= bound + 3.0 * tv.stderr,
                max_c_offset_at_delta_0_1: max_c_offset(args.n, args.k.max(1), 0.1),
            })
        }
        Command::Sweep(args) => {
            let text = std::fs::read_to_string(&args.config)
                .map_err(|e| config_err(format!("cannot read {}: {e}", args.config.display())))?;
            let configs = parse_sweep_config(&text)?;
            sweep(&configs, args.jobs)?.render(config.format)
        }
    }
}

/// Runs a command and emits its report to `--out` (atomically) or `stdout`.
pub fn run(config: &ExperimentConfig, stdout: &mut dyn Write) -> Result<()> {
    let rendered = render(config)?;
    match &config.out {
        Some(path) => write_atomic(path, rendered.as_bytes()),
        None => {
            stdout.write_all(rendered.as_bytes())?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> ExperimentConfig {
        ExperimentConfig::try_parse_from(std::iter::once("lossyboson").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn reduce_noise_free_report() {
        let out = render(&parse(&["reduce", "--n", "3", "--k", "1", "--noise", "none", "--seed", "7"])).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(v["error_units_nfact"].as_f64().unwrap() <= 1e-8);
        assert_eq!(v["nodes"]["variable"], "c^2");
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        for args in [
            vec!["reduce", "--n", "0"],
            vec!["reduce", "--n", "3", "--delta", "1.5"],
            vec!["reduce", "--n", "3", "--model", "shuffle-mix"],
            vec!["reduce", "--n", "3", "--model", "input", "--probs", "0.5,0.5"],
            vec!["phi", "--model", "shuffle-mix", "--n", "2", "--probs", "0.7,0.7"],
            vec!["sample", "--m", "3", "--n", "2", "--k", "2"],
            vec!["permanent"],
        ] {
            let err = render(&parse(&args)).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{args:?}: {err}");
        }
    }

    #[test]
    fn empty_sweep_is_empty() {
        let configs = parse_sweep_config("[]").unwrap();
        let report = sweep(&configs, 2).unwrap();
        assert!(report.rows.is_empty());
        assert_eq!(report.to_csv(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn sweep_rejects_mixed_subcommands() {
        assert!(parse_sweep_config(r#"[{"n": 3, "subcommand": "phi"}]"#).is_err());
        assert!(parse_sweep_config(r#"[{"n": 3, "bogus": 1}]"#).is_err());
        assert!(parse_sweep_config(r#"[{"n": 3, "subcommand": "reduce"}]"#).is_ok());
    }

    #[test]
    fn sweep_rows_in_config_order_and_success_rule() {
        let configs = parse_sweep_config(
            r#"[{"n": 3, "k": 1, "noise": "uniform", "epsilon": 0.3, "delta": 0.2, "trials": 3, "seed": 1},
                {"n": 2, "k": 2, "noise": "none", "trials": 2, "seed": 2}]"#,
        )
        .unwrap();
        let report = sweep(&configs, 3).unwrap();
        assert_eq!(report.rows.len(), 5);
        assert_eq!(report.rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![3, 3, 3, 2, 2]);
        for r in &report.rows {
            assert_eq!(r.success, r.abs_err <= r.epsilon * factorial(r.n));
        }
        assert_eq!(report.to_csv(), sweep(&configs, 1).unwrap().to_csv());
    }

    #[test]
    fn failing_cell_is_recorded() {
        let configs = vec![
            ReduceArgs { nodes: Some(2), ..parse_reduce(&["--n", "2", "--k", "1"]) },
            ReduceArgs { delta: 1e-300, ..parse_reduce(&["--n", "2", "--k", "4"]) },
        ];
        let report = sweep(&configs, 1).unwrap();
        assert_eq!(report.summary.len(), 2);
        assert!(report.summary[0].error.is_none());
        assert!(report.summary[1].error.is_some());
        assert!(report.to_csv().contains("# cell=1"));
    }

    fn parse_reduce(args: &[&str]) -> ReduceArgs {
        let mut full = vec!["reduce"];
        full.extend_from_slice(args);
        match parse(&full).command {
            Command::Reduce(r) => r,
            _ => unreachable!(),
        }
    }

    #[test]
    fn csv_floats_have_17_significant_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn seed_override() {
        let mut cfg = parse(&["phi", "--model", "input", "--n", "2", "--seed", "3"]);
        cfg.override_seed(99);
        match cfg.command {
            Command::Phi(a) => assert_eq!(a.seed, 99),
            _ => unreachable!(),
        }
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
