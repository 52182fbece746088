//! The `slp` command line driver.
//!
//! Every subcommand reads an optional TOML file (`--config`) whose keys
//! mirror the long flags; flags given on the command line win. Unknown keys
//! are rejected. The resolved configuration, minus output destinations, is
//! embedded in every text output together with the crate version, so a run
//! can be repeated from its own output.
//!
//! Exit codes: 0 success, 2 usage error, 3 numerical failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{load_dataset, load_precoders, sample_rayleigh, sample_rician, save_dataset, save_precoders, Dataset};
use crate::constellation::Constellation;
use crate::error::SlpError;
use crate::evaluator::{
    ser_sweep, timing_bench, write_bench_csv, write_csv, write_ser_csv, write_ser_json, AlwaysCorrect, Backend,
    BenchRow, BlpBackend, NeuralBackend, SerRow, Silent, SolverBackend, SweepConfig,
};
use crate::matrix::PrecodingMatrix;
use crate::neural::{
    load_checkpoint, save_checkpoint, Activation, Network, NetworkSpec, Scaling, TrainConfig, TrainMode, Trainer,
    TrainingData,
};
use crate::solver::{oracle_solve, solve_maxmin, SolveConfig, SolveStatus, SolverMethod};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<SlpError> for CliError {
    fn from(e: SlpError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "slp", version, about = "Symbol-level precoding: data, solver, training, evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a channel dataset.
    GenData(GenDataArgs),
    /// Solve the max-min problem for every channel of a dataset.
    Solve(SolveArgs),
    /// Train a precoding network.
    Train(TrainArgs),
    /// SER versus SNR for several backends.
    EvalSer(EvalSerArgs),
    /// Per-channel design time versus the number of users.
    Bench(BenchArgs),
}

/// Parses the process arguments, runs, and maps failures to exit codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Solve(a) => solve(a),
        Command::Train(a) => train(a),
        Command::EvalSer(a) => eval_ser(a),
        Command::Bench(a) => bench(a),
    }
}

/// Reads `path` into `T`, refusing `forbidden` keys inside sub-tables so
/// that seeds and budgets live only at the top level.
fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>, forbidden: &[(&str, &str)]) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    for (section, key) in forbidden {
        if table.get(*section).and_then(|s| s.get(*key)).is_some() {
            return Err(usage(format!("`{section}.{key}` is not allowed; set `{key}` at the top level")));
        }
    }
    T::deserialize(table).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// The resolved configuration as comment lines.
fn config_comments<C: Serialize>(command: &str, cfg: &C) -> CliResult<Vec<String>> {
    let text = toml::to_string(cfg).map_err(|e| usage(format!("cannot serialize config: {e}")))?;
    Ok(vec![format!("command: {command}"), text])
}

fn required<'a>(p: &'a Option<PathBuf>, name: &str) -> CliResult<&'a PathBuf> {
    p.as_ref().ok_or_else(|| usage(format!("missing --{name}")))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn open_dataset(path: &Path) -> CliResult<Dataset> {
    if !path.exists() {
        return Err(usage(format!("dataset not found: {}", path.display())));
    }
    Ok(load_dataset(path)?)
}

macro_rules! overlay {
    ($cfg:expr, $args:expr; $($field:ident),* $(,)?) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v.into(); })*
    };
}

// ---------------------------------------------------------------- gen-data

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    #[default]
    Rayleigh,
    Rician,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenDataConfig {
    pub users: usize,
    pub antennas: usize,
    pub count: usize,
    pub seed: u64,
    pub fading: Fading,
    pub k_factor: f64,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        Self {
            users: 3,
            antennas: 4,
            count: 1000,
            seed: 0,
            fading: Fading::Rayleigh,
            k_factor: 0.0,
            out: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of users.
    #[arg(long = "K")]
    pub users: Option<usize>,
    /// Number of transmit antennas.
    #[arg(long = "Nt")]
    pub antennas: Option<usize>,
    /// Number of channels.
    #[arg(long)]
    pub count: Option<usize>,
    /// Seed for every random draw of the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Channel distribution.
    #[arg(long, value_enum)]
    pub fading: Option<Fading>,
    /// Rician K-factor (linear).
    #[arg(long)]
    pub k_factor: Option<f64>,
    /// Output SLPD file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn gen_data(a: GenDataArgs) -> CliResult {
    let mut cfg: GenDataConfig = load_config(a.config.as_deref(), &[])?;
    overlay!(cfg, a; users, antennas, count, seed, fading, k_factor);
    if a.out.is_some() {
        cfg.out = a.out.clone();
    }
    let out = required(&cfg.out, "out")?;
    let d = match cfg.fading {
        Fading::Rayleigh => sample_rayleigh(cfg.users, cfg.antennas, cfg.count, cfg.seed)?,
        Fading::Rician => sample_rician(cfg.users, cfg.antennas, cfg.count, cfg.k_factor, cfg.seed)?,
    };
    save_dataset(&d, out)?;
    eprintln!("wrote {} channels ({}x{}) to {}", d.len(), d.users(), d.antennas(), out.display());
    Ok(())
}

// ---------------------------------------------------------------- shared

/// Solver settings shared by `solve`, `eval-ser` and `bench`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub method: SolverMethod,
    pub tol: f64,
    pub max_iters: usize,
    pub restarts: usize,
    pub smoothing: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        let d = SolveConfig::default();
        Self {
            method: d.method,
            tol: d.tol,
            max_iters: d.max_iters,
            restarts: d.restarts,
            smoothing: d.smoothing,
        }
    }
}

impl SolverOptions {
    fn oracle() -> Self {
        Self {
            max_iters: 50_000,
            restarts: 2,
            ..Self::default()
        }
    }

    fn resolve(&self, power_budget: f64, seed: u64) -> SolveConfig {
        SolveConfig {
            power_budget,
            tol: self.tol,
            max_iters: self.max_iters,
            smoothing: self.smoothing,
            restarts: self.restarts,
            seed,
            method: self.method,
        }
    }
}

fn psk(order: usize) -> CliResult<Constellation> {
    Ok(Constellation::new(order, 0.0)?)
}

// ---------------------------------------------------------------- solve

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveRunConfig {
    pub dataset: Option<PathBuf>,
    pub order: usize,
    pub power_budget: f64,
    pub seed: u64,
    /// Solve only the first `limit` channels.
    pub limit: Option<usize>,
    /// Also run the bisection oracle and report the gap.
    pub oracle: bool,
    pub solver: SolverOptions,
    #[serde(default = "SolverOptions::oracle")]
    pub oracle_solver: SolverOptions,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub summary: Option<PathBuf>,
}

impl Default for SolveRunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            order: 4,
            power_budget: 1.0,
            seed: 0,
            limit: None,
            oracle: false,
            solver: SolverOptions::default(),
            oracle_solver: SolverOptions::oracle(),
            out: None,
            summary: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input SLPD dataset.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// PSK order.
    #[arg(long)]
    pub order: Option<usize>,
    /// Power budget per symbol vector.
    #[arg(long = "power")]
    pub power_budget: Option<f64>,
    /// Seed for every random draw of the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use only the first `limit` channels.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Cross-check every instance with the bisection oracle.
    #[arg(long)]
    pub oracle: bool,
    /// Solver algorithm.
    #[arg(long, value_enum)]
    pub method: Option<SolverMethod>,
    /// Relative objective tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration cap per restart.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Output SLPD precoder corpus, usable as training labels.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary JSON; printed to stdout when absent.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

impl ValueEnum for SolverMethod {
    fn value_variants<'a>() -> &'a [Self] {
        &[SolverMethod::MinNorm, SolverMethod::Softmin]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            SolverMethod::MinNorm => "min_norm",
            SolverMethod::Softmin => "softmin",
        }))
    }
}

#[derive(Serialize)]
struct InstanceSummary {
    index: usize,
    t: f64,
    status: SolveStatus,
    iterations: usize,
    feasibility_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relative_gap: Option<f64>,
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    schema_version: u32,
    version: &'a str,
    config: &'a SolveRunConfig,
    instances: usize,
    converged: usize,
    t_mean: f64,
    t_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_relative_gap: Option<f64>,
    results: Vec<InstanceSummary>,
}

fn solve(a: SolveArgs) -> CliResult {
    let mut cfg: SolveRunConfig = load_config(a.config.as_deref(), &[("solver", "seed"), ("solver", "power_budget")])?;
    overlay!(cfg, a; order, power_budget, seed);
    overlay!(cfg.solver, a; method, tol, max_iters);
    for (dst, src) in [(&mut cfg.dataset, &a.dataset), (&mut cfg.out, &a.out), (&mut cfg.summary, &a.summary)] {
        if src.is_some() {
            dst.clone_from(src);
        }
    }
    if a.limit.is_some() {
        cfg.limit = a.limit;
    }
    cfg.oracle |= a.oracle;

    let dataset = open_dataset(required(&cfg.dataset, "dataset")?)?;
    let c = psk(cfg.order)?;
    let solve_cfg = cfg.solver.resolve(cfg.power_budget, cfg.seed);
    let oracle_cfg = cfg.oracle_solver.resolve(cfg.power_budget, cfg.seed);
    let n = cfg.limit.unwrap_or(dataset.len()).min(dataset.len());

    let mut results = Vec::with_capacity(n);
    let mut precoders: Vec<PrecodingMatrix> = Vec::with_capacity(n);
    for (index, h) in dataset.channels().iter().take(n).enumerate() {
        let r = solve_maxmin(h, &c, &solve_cfg)?;
        let oracle_t = if cfg.oracle {
            Some(oracle_solve(h, &c, &oracle_cfg)?.t)
        } else {
            None
        };
        results.push(InstanceSummary {
            index,
            t: r.t,
            status: r.status,
            iterations: r.iterations,
            feasibility_residual: r.feasibility_residual,
            oracle_t,
            relative_gap: oracle_t.map(|o| (r.t - o).abs() / r.t.abs().max(o.abs()).max(f64::MIN_POSITIVE)),
        });
        precoders.push(r.x);
    }
    if let Some(out) = &cfg.out {
        save_precoders(&precoders, dataset.seed(), out)?;
    }

    let ts: Vec<f64> = results.iter().map(|r| r.t).collect();
    let summary = SolveSummary {
        schema_version: crate::evaluator::SCHEMA_VERSION,
        version: crate::VERSION,
        config: &cfg,
        instances: n,
        converged: results.iter().filter(|r| r.status == SolveStatus::Converged).count(),
        t_mean: ts.iter().sum::<f64>() / n.max(1) as f64,
        t_min: ts.iter().copied().fold(f64::INFINITY, f64::min),
        max_relative_gap: cfg
            .oracle
            .then(|| results.iter().filter_map(|r| r.relative_gap).fold(0.0, f64::max)),
        results,
    };
    let write = |w: &mut dyn Write| -> CliResult {
        serde_json::to_writer_pretty(&mut *w, &summary).map_err(|e| usage(format!("JSON: {e}")))?;
        writeln!(w)?;
        Ok(())
    };
    match &cfg.summary {
        Some(p) => write(&mut create(p)?)?,
        None => write(&mut std::io::stdout().lock())?,
    }
    Ok(())
}

// ---------------------------------------------------------------- train

/// Architecture knobs; the dimensions come from the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkOptions {
    /// Every layer width of the full architecture is divided by this.
    pub width_divisor: usize,
    pub activation: Activation,
    pub batch_norm: bool,
    pub scaling: Scaling,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        Self {
            width_divisor: 1,
            activation: Activation::Relu,
            batch_norm: true,
            scaling: Scaling::Literal,
        }
    }
}

impl NetworkOptions {
    fn build(&self, users: usize, antennas: usize, order: usize, power_budget: f64) -> CliResult<NetworkSpec> {
        if self.width_divisor == 0 {
            return Err(usage("width_divisor must be at least 1"));
        }
        let mut spec = NetworkSpec::narrowed(users, antennas, order, power_budget, self.width_divisor);
        spec.activation = self.activation;
        spec.batch_norm = self.batch_norm;
        spec.scaling = self.scaling;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainRunConfig {
    pub dataset: Option<PathBuf>,
    /// SLPD precoder corpus aligned with the dataset (supervised mode).
    pub labels: Option<PathBuf>,
    /// Checkpoint to continue from; `train.epochs` is the total.
    pub resume: Option<PathBuf>,
    pub order: usize,
    pub power_budget: f64,
    pub seed: u64,
    pub network: NetworkOptions,
    pub train: TrainConfig,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    /// Loss trace CSV; defaults to the checkpoint path with `.trace.csv`.
    #[serde(skip_serializing)]
    pub trace: Option<PathBuf>,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            labels: None,
            resume: None,
            order: 4,
            power_budget: 1.0,
            seed: 0,
            network: NetworkOptions::default(),
            train: TrainConfig::default(),
            out: None,
            trace: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Unsupervised,
    Supervised,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Unsupervised => TrainMode::Unsupervised,
            ModeArg::Supervised => TrainMode::Supervised,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input SLPD dataset.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// SLPD precoder corpus from `slp solve --out` (supervised mode).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Checkpoint to continue from; `--epochs` is the total.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// PSK order.
    #[arg(long)]
    pub order: Option<usize>,
    /// Power budget per symbol vector.
    #[arg(long = "power")]
    pub power_budget: Option<f64>,
    /// Seed for every random draw of the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Loss to train on.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Number of epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial Adam learning rate.
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    /// Regularization constant; the margin variance enters the loss divided by it.
    #[arg(long = "lambda")]
    pub lambda_reg: Option<f64>,
    /// Divide every layer width of the full architecture by this.
    #[arg(long)]
    pub width_divisor: Option<usize>,
    /// Output SLPW checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Loss trace CSV; defaults to the checkpoint path with `.trace.csv`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Serialize)]
struct TraceRow {
    epoch: usize,
    loss: f64,
    learning_rate: f64,
}

fn train(a: TrainArgs) -> CliResult {
    let mut cfg: TrainRunConfig = load_config(a.config.as_deref(), &[("train", "seed")])?;
    overlay!(cfg, a; order, power_budget, seed);
    overlay!(cfg.train, a; mode, epochs, batch_size, learning_rate, lambda_reg);
    overlay!(cfg.network, a; width_divisor);
    for (dst, src) in [
        (&mut cfg.dataset, &a.dataset),
        (&mut cfg.labels, &a.labels),
        (&mut cfg.resume, &a.resume),
        (&mut cfg.out, &a.out),
        (&mut cfg.trace, &a.trace),
    ] {
        if src.is_some() {
            dst.clone_from(src);
        }
    }
    cfg.train.seed = cfg.seed;
    cfg.train.validate()?;
    if cfg.train.mode == TrainMode::Supervised && cfg.labels.is_none() {
        return Err(usage("supervised training needs --labels"));
    }

    let out = required(&cfg.out, "out")?.clone();
    let trace_path = cfg.trace.clone().unwrap_or_else(|| out.with_extension("trace.csv"));
    let dataset = open_dataset(required(&cfg.dataset, "dataset")?)?;
    let labels = match (&cfg.labels, cfg.train.mode) {
        (Some(p), TrainMode::Supervised) => Some(load_precoders(p)?),
        _ => None,
    };

    let mut trainer = match &cfg.resume {
        Some(p) => {
            let ckpt = load_checkpoint(p)?;
            if ckpt.spec.order != cfg.order || ckpt.spec.power_budget != cfg.power_budget {
                return Err(usage("checkpoint was built for a different order or power budget"));
            }
            Trainer::resume(ckpt, cfg.train)?
        }
        None => {
            let spec = cfg
                .network
                .build(dataset.users(), dataset.antennas(), cfg.order, cfg.power_budget)?;
            Trainer::new(spec, cfg.train)?
        }
    };

    let data = TrainingData {
        channels: &dataset,
        labels: labels.as_deref(),
    };
    let mut save_err = None;
    let report = trainer.fit(&data, |t, r| {
        eprintln!("epoch {} loss {:.6e} lr {:.1e}", r.epoch, r.loss, r.learning_rate);
        if save_err.is_none() {
            save_err = save_checkpoint(&t.checkpoint(), &out).err();
        }
    })?;
    if let Some(e) = save_err {
        return Err(e.into());
    }
    save_checkpoint(&trainer.checkpoint(), &out)?;

    let rows: Vec<TraceRow> = report
        .trace
        .iter()
        .map(|r| TraceRow {
            epoch: r.epoch,
            loss: r.loss,
            learning_rate: r.learning_rate,
        })
        .collect();
    write_csv(create(&trace_path)?, &rows, &config_comments("train", &cfg)?)?;

    if let Some(epoch) = report.diverged_at {
        return Err(CliError::Numerical(format!(
            "training diverged at epoch {epoch}; checkpoint holds epoch {}",
            epoch - 1
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- eval-ser

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSerConfig {
    pub dataset: Option<PathBuf>,
    /// `solver`, `blp`, `always_correct`, `silent`, or `name=checkpoint`
    /// for a trained network.
    pub backends: Vec<String>,
    pub snr_db: Vec<f64>,
    pub symbols_per_channel: usize,
    pub order: usize,
    pub power_budget: f64,
    pub seed: u64,
    pub limit: Option<usize>,
    pub solver: SolverOptions,
    /// SER CSV; printed to stdout when absent.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub json: Option<PathBuf>,
}

impl Default for EvalSerConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            backends: vec!["solver".into(), "blp".into()],
            snr_db: (0..=6).map(|i| 5.0 * i as f64).collect(),
            symbols_per_channel: 100,
            order: 4,
            power_budget: 1.0,
            seed: 0,
            limit: None,
            solver: SolverOptions::default(),
            out: None,
            json: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalSerArgs {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input SLPD dataset.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Repeatable; replaces the configured list.
    #[arg(long = "backend")]
    pub backends: Vec<String>,
    /// Comma-separated SNR grid in dB; `inf` disables noise.
    #[arg(long = "snr", value_delimiter = ',', allow_hyphen_values = true)]
    pub snr_db: Vec<f64>,
    /// Symbol vectors drawn per channel and SNR point.
    #[arg(long = "symbols")]
    pub symbols_per_channel: Option<usize>,
    /// PSK order.
    #[arg(long)]
    pub order: Option<usize>,
    /// Power budget per symbol vector.
    #[arg(long = "power")]
    pub power_budget: Option<f64>,
    /// Seed for every random draw of the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use only the first `limit` channels.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the results as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn make_backend(
    name: &str,
    users: usize,
    antennas: usize,
    order: usize,
    power_budget: f64,
    solver: SolveConfig,
) -> CliResult<Box<dyn Backend>> {
    Ok(match name {
        "solver" => Box::new(SolverBackend { config: solver }),
        "blp" => Box::new(BlpBackend { power_budget }),
        "always_correct" => Box::new(AlwaysCorrect { power_budget }),
        "silent" => Box::new(Silent),
        other => {
            let (label, path) = other
                .split_once('=')
                .ok_or_else(|| usage(format!("unknown backend `{other}`; networks are given as name=checkpoint")))?;
            let ckpt = load_checkpoint(path)?;
            let s = &ckpt.spec;
            if s.users != users || s.antennas != antennas || s.order != order || s.power_budget != power_budget {
                return Err(usage(format!(
                    "network `{label}` is for K={} N_t={} M={} P={}, run is K={users} N_t={antennas} M={order} P={power_budget}",
                    s.users, s.antennas, s.order, s.power_budget
                )));
            }
            Box::new(NeuralBackend {
                name: label.to_string(),
                network: Network::new(ckpt.spec, ckpt.params)?,
            })
        }
    })
}

fn eval_ser(a: EvalSerArgs) -> CliResult {
    let mut cfg: EvalSerConfig = load_config(a.config.as_deref(), &[("solver", "seed"), ("solver", "power_budget")])?;
    overlay!(cfg, a; symbols_per_channel, order, power_budget, seed);
    for (dst, src) in [(&mut cfg.dataset, &a.dataset), (&mut cfg.out, &a.out), (&mut cfg.json, &a.json)] {
        if src.is_some() {
            dst.clone_from(src);
        }
    }
    if a.limit.is_some() {
        cfg.limit = a.limit;
    }
    if !a.backends.is_empty() {
        cfg.backends = a.backends.clone();
    }
    if !a.snr_db.is_empty() {
        cfg.snr_db = a.snr_db.clone();
    }
    if cfg.backends.is_empty() || cfg.snr_db.is_empty() {
        return Err(usage("need at least one backend and one SNR point"));
    }

    let mut dataset = open_dataset(required(&cfg.dataset, "dataset")?)?;
    if let Some(n) = cfg.limit {
        dataset = dataset.truncated(n);
    }
    let c = psk(cfg.order)?;
    let sweep = SweepConfig {
        snr_db: cfg.snr_db.clone(),
        symbols_per_channel: cfg.symbols_per_channel,
        power_budget: cfg.power_budget,
        seed: cfg.seed,
    };
    let solver = cfg.solver.resolve(cfg.power_budget, cfg.seed);
    let backends = cfg
        .backends
        .iter()
        .map(|b| make_backend(b, dataset.users(), dataset.antennas(), cfg.order, cfg.power_budget, solver))
        .collect::<CliResult<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for b in &backends {
        let s = ser_sweep(b.as_ref(), &dataset, &c, &sweep)?;
        eprintln!("{}: {} channels skipped", b.name(), s.skipped);
        skipped.push((b.name().to_string(), s.skipped));
        rows.extend(s.points.into_iter().map(|p| SerRow {
            backend: b.name().to_string(),
            users: dataset.users(),
            antennas: dataset.antennas(),
            snr_db: p.snr_db,
            trials: p.trials,
            errors: p.errors,
            ser: p.ser,
        }));
    }

    let mut comments = config_comments("eval-ser", &cfg)?;
    comments.push(format!(
        "skipped_channels: {}",
        skipped.iter().map(|(b, n)| format!("{b}={n}")).collect::<Vec<_>>().join(" ")
    ));
    match &cfg.out {
        Some(p) => write_ser_csv(create(p)?, &rows, &comments)?,
        None => write_ser_csv(std::io::stdout().lock(), &rows, &comments)?,
    }
    if let Some(p) = &cfg.json {
        write_ser_json(create(p)?, &rows, &cfg, &skipped)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- bench

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    /// User counts to sweep.
    pub users: Vec<usize>,
    pub antennas: usize,
    pub order: usize,
    pub power_budget: f64,
    pub seed: u64,
    pub repetitions: usize,
    /// `solver`, `blp` or `nn` (a randomly initialized network; timing does
    /// not depend on the weights).
    pub backends: Vec<String>,
    pub network: NetworkOptions,
    pub solver: SolverOptions,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            users: vec![2, 3, 4, 5],
            antennas: 5,
            order: 4,
            power_budget: 1.0,
            seed: 0,
            repetitions: 20,
            backends: vec!["solver".into(), "nn".into()],
            network: NetworkOptions::default(),
            solver: SolverOptions::default(),
            out: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated user counts.
    #[arg(long = "K", value_delimiter = ',')]
    pub users: Vec<usize>,
    /// Number of transmit antennas.
    #[arg(long = "Nt")]
    pub antennas: Option<usize>,
    /// PSK order.
    #[arg(long)]
    pub order: Option<usize>,
    /// Power budget per symbol vector.
    #[arg(long = "power")]
    pub power_budget: Option<f64>,
    /// Seed for every random draw of the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Timed designs per K (at least 10).
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Backends to time.
    #[arg(long = "backend")]
    pub backends: Vec<String>,
    /// Divide every layer width of the full architecture by this.
    #[arg(long)]
    pub width_divisor: Option<usize>,
    /// Bench CSV; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn bench(a: BenchArgs) -> CliResult {
    let mut cfg: BenchConfig = load_config(a.config.as_deref(), &[("solver", "seed"), ("solver", "power_budget")])?;
    overlay!(cfg, a; antennas, order, power_budget, seed, repetitions);
    overlay!(cfg.network, a; width_divisor);
    if a.out.is_some() {
        cfg.out.clone_from(&a.out);
    }
    if !a.users.is_empty() {
        cfg.users = a.users.clone();
    }
    if !a.backends.is_empty() {
        cfg.backends = a.backends.clone();
    }
    if cfg.repetitions < 10 {
        return Err(usage("bench needs at least 10 repetitions"));
    }
    if cfg.users.is_empty() || cfg.backends.is_empty() {
        return Err(usage("need at least one K and one backend"));
    }
    let c = psk(cfg.order)?;
    let solver = cfg.solver.resolve(cfg.power_budget, cfg.seed);

    let mut rows: Vec<BenchRow> = Vec::new();
    let smallest = *cfg.users.iter().min().expect("checked non-empty");
    for name in &cfg.backends {
        let first = rows.len();
        for &k in &cfg.users {
            let channels = sample_rayleigh(k, cfg.antennas, cfg.repetitions + crate::evaluator::WARMUP, cfg.seed)?;
            let backend: Box<dyn Backend> = match name.as_str() {
                "nn" => {
                    let spec = cfg.network.build(k, cfg.antennas, cfg.order, cfg.power_budget)?;
                    Box::new(NeuralBackend {
                        name: "nn".into(),
                        network: Network::random(spec, cfg.seed)?,
                    })
                }
                "solver" | "blp" => make_backend(name, k, cfg.antennas, cfg.order, cfg.power_budget, solver)?,
                other => return Err(usage(format!("unknown bench backend `{other}`"))),
            };
            let r = timing_bench(backend.as_ref(), &channels, &c, cfg.repetitions)?;
            eprintln!("{name} K={k}: {:.4} ms", r.mean_ms);
            rows.push(BenchRow {
                backend: name.clone(),
                users: k,
                antennas: cfg.antennas,
                mean_ms: r.mean_ms,
                samples: r.samples,
                ratio_to_smallest_k: f64::NAN,
            });
        }
        let base = rows[first..]
            .iter()
            .find(|r| r.users == smallest)
            .map(|r| r.mean_ms)
            .expect("smallest K was timed");
        rows[first..].iter_mut().for_each(|r| r.ratio_to_smallest_k = r.mean_ms / base);
    }
    let comments = config_comments("bench", &cfg)?;
    match &cfg.out {
        Some(p) => write_bench_csv(create(p)?, &rows, &comments)?,
        None => write_bench_csv(std::io::stdout().lock(), &rows, &comments)?,
    }
    Ok(())
}
