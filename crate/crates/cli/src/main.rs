//! `srs-lab`: every experiment as a subcommand writing CSV/PGM files and a
//! `run-manifest.txt` into the output directory.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use srs_core::train::{parse_key_values, InitScheme, ToyKind};
use srs_core::ActivationKind;

#[derive(Debug, Parser)]
#[command(name = "srs-lab", version, about = "Soft-Root-Sign activation experiments")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Output directory, created if absent.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// `key = value` file; keys are long flag names of the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Output mean and variance of SRS under N(0, 1) over an (alpha, beta) grid.
    Moments(MomentsArgs),
    /// Output landscapes of random 2-64-64-64-64-1 networks.
    Landscape(LandscapeArgs),
    /// Iterated forward maps x_i = f(w_i x_{i-1} + b_i).
    Iterate(IterateArgs),
    /// Train one MLP and log metrics.
    Train(TrainArgs),
    /// Median-of-seeds test error over an lr / batch-norm / init grid.
    Ablate(AblateArgs),
    /// Finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
    /// Minimum and supremum of SRS for given parameters.
    Shape(ShapeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PgmKind {
    Plain,
    Raw,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got '{s}'")),
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("expected a positive integer, got '{s}'")),
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..1.0).contains(&v) => Ok(v),
        _ => Err(format!("expected a number in [0, 1), got '{s}'")),
    }
}

fn non_negative_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a non-negative number, got '{s}'")),
    }
}

fn activation(s: &str) -> Result<ActivationKind, String> {
    s.parse().map_err(|e: srs_core::Error| e.to_string())
}

fn init_scheme(s: &str) -> Result<InitScheme, String> {
    s.parse().map_err(|e: srs_core::Error| e.to_string())
}

fn toy_kind(s: &str) -> Result<ToyKind, String> {
    s.parse().map_err(|e: srs_core::Error| e.to_string())
}

fn extent(s: &str) -> Result<(f64, f64, f64, f64), String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    match v[..] {
        [a, b, c, d] if a < b && c < d && v.iter().all(|x| x.is_finite()) => Ok((a, b, c, d)),
        _ => Err(format!("expected xmin,xmax,ymin,ymax with min < max, got '{s}'")),
    }
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 3.0, 4.0, 5.0], value_parser = positive_f64)]
    pub alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0], value_parser = positive_f64)]
    pub betas: Vec<f64>,
    /// Integrate over [-T, T].
    #[arg(long, default_value_t = 12.0, value_parser = positive_f64)]
    pub truncation: f64,
    #[arg(long, default_value_t = 2048, value_parser = clap::value_parser!(u64).range(16..))]
    pub panels: u64,
    #[arg(long, default_value = "gauss-legendre")]
    pub rule: String,
    /// Also estimate every convergent cell by Monte-Carlo with this many samples.
    #[arg(long)]
    pub mc_samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LandscapeArgs {
    #[arg(long, value_delimiter = ',', default_values = ["srs", "relu"], value_parser = activation)]
    pub activations: Vec<ActivationKind>,
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(3..))]
    pub height: u64,
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(3..))]
    pub width: u64,
    #[arg(long, default_value = "-6,6,-6,6", value_parser = extent, allow_hyphen_values = true)]
    pub extent: (f64, f64, f64, f64),
    /// Landscapes per activation, seeds `seed..seed+runs`.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: u64,
    #[arg(long, default_value_t = 5.0, value_parser = positive_f64)]
    pub srs_alpha: f64,
    #[arg(long, default_value_t = 3.0, value_parser = positive_f64)]
    pub srs_beta: f64,
    #[arg(long, value_enum, default_value_t = PgmKind::Raw)]
    pub pgm: PgmKind,
}

#[derive(Debug, Args)]
pub struct IterateArgs {
    #[arg(long, value_delimiter = ',', default_values = ["srs", "sigmoid"], value_parser = activation)]
    pub activations: Vec<ActivationKind>,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(2..))]
    pub iters: u64,
    /// Trajectories per activation, seeds `seed..seed+runs`.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: u64,
    #[arg(long, default_value_t = 5.0, value_parser = positive_f64)]
    pub srs_alpha: f64,
    #[arg(long, default_value_t = 3.0, value_parser = positive_f64)]
    pub srs_beta: f64,
}

/// Settings shared by `train` and `ablate`.
#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "srs", value_parser = activation)]
    pub activation: ActivationKind,
    #[arg(long, default_value_t = 0.01, value_parser = positive_f64)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9, value_parser = unit_interval)]
    pub momentum: f64,
    #[arg(long, default_value_t = 5e-4, value_parser = non_negative_f64)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch_size: u64,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: u64,
    /// gaussian, gaussian:<std>, xavier or he.
    #[arg(long, default_value = "gaussian", value_parser = init_scheme)]
    pub init: InitScheme,
    #[arg(long, default_value_t = false, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub use_bn: bool,
    #[arg(long, default_value_t = 3.0, value_parser = positive_f64)]
    pub srs_alpha: f64,
    #[arg(long, default_value_t = 2.0, value_parser = positive_f64)]
    pub srs_beta: f64,
    #[arg(long, default_value_t = 0.01, value_parser = non_negative_f64)]
    pub clamp_floor: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [512usize, 512, 512, 256], value_parser = positive_usize)]
    pub hidden: Vec<usize>,
    /// Dropout rate after each activation; 0 disables it.
    #[arg(long, default_value_t = 0.0, value_parser = unit_interval)]
    pub dropout: f64,
    #[arg(long, default_value_t = false, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub swish_trainable: bool,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub log_every: u64,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub eval_every: u64,
    /// Directory with uncompressed Fashion-MNIST IDX files.
    #[arg(long, default_value = "data/fashion-mnist")]
    pub data: PathBuf,
    /// Train on a synthetic 2-D set instead of Fashion-MNIST.
    #[arg(long, value_parser = toy_kind)]
    pub toy: Option<ToyKind>,
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(2..))]
    pub toy_n: u64,
    #[arg(long, default_value_t = 0.1, value_parser = non_negative_f64)]
    pub toy_noise: f64,
    /// Use only the leading N training examples (0 keeps all).
    #[arg(long, default_value_t = 0)]
    pub train_limit: usize,
    /// Use only the leading N test examples (0 keeps all).
    #[arg(long, default_value_t = 0)]
    pub test_limit: usize,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub base: TrainArgs,
    #[arg(long, value_delimiter = ',', default_values = ["srs", "relu"], value_parser = activation)]
    pub activations: Vec<ActivationKind>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.1], value_parser = positive_f64)]
    pub lrs: Vec<f64>,
    /// Batch-norm settings to sweep, e.g. `false,true`.
    #[arg(long, value_delimiter = ',', default_values_t = [false, true], action = clap::ArgAction::Set)]
    pub bn_modes: Vec<bool>,
    #[arg(long, value_delimiter = ',', default_values = ["gaussian"], value_parser = init_scheme)]
    pub inits: Vec<InitScheme>,
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3])]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub batches: u64,
    /// Entries probed per parameter tensor.
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,
    #[arg(long, default_value_t = 1e-5, value_parser = positive_f64)]
    pub step: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [512usize, 512, 512, 256], value_parser = positive_usize)]
    pub hidden: Vec<usize>,
    /// Fail (exit 2) above this relative error.
    #[arg(long, default_value_t = 1e-5, value_parser = positive_f64)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct ShapeArgs {
    #[arg(long, default_value_t = 5.0, value_parser = positive_f64)]
    pub alpha: f64,
    #[arg(long, default_value_t = 3.0, value_parser = positive_f64)]
    pub beta: f64,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys or parameter values: exit 1.
    Validation(String),
    /// Failure while running: exit 2.
    Runtime(String),
}

impl From<srs_core::Error> for CliError {
    fn from(e: srs_core::Error) -> Self {
        match e {
            srs_core::Error::Config(_) | srs_core::Error::InvalidParameter(_) => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Inserts `--key=value` pairs from the config file right after the
/// subcommand token, so flags given on the command line win. A run manifest
/// is accepted as a config file.
fn merge_config(argv: &[OsString], first: &Cli) -> Result<Vec<OsString>, CliError> {
    let Some(path) = &first.config else {
        return Ok(argv.to_vec());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("--config: cannot read {}: {e}", path.display())))?;
    let pairs =
        parse_key_values(&text).map_err(|e| CliError::Validation(format!("--config {}: {e}", path.display())))?;
    let name = commands::name(&first.command);
    let cmd = Cli::command();
    let sub = cmd.find_subcommand(name).expect("subcommand exists");
    let known: Vec<String> = sub
        .get_arguments()
        .chain(cmd.get_arguments())
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();
    let mut extra = Vec::new();
    for (key, value) in pairs {
        match key.as_str() {
            "output" => continue,
            "command" if value == name => continue,
            "command" => {
                return Err(CliError::Validation(format!(
                    "--config {}: written for '{value}', not '{name}'",
                    path.display()
                )))
            }
            _ if value.is_empty() => continue,
            _ => {}
        }
        let flag = key.replace('_', "-");
        if flag == "config" || !known.contains(&flag) {
            return Err(CliError::Validation(format!(
                "--config {}: unknown key '{key}' for '{name}'",
                path.display()
            )));
        }
        extra.push(OsString::from(format!("--{flag}={value}")));
    }
    let at = argv.iter().position(|a| a == name).map_or(argv.len(), |i| i + 1);
    let mut merged = argv[..at].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&argv[at..]);
    Ok(merged)
}

fn parse(argv: &[OsString]) -> Result<(Cli, clap::ArgMatches), clap::Error> {
    let matches = Cli::command().try_get_matches_from(argv)?;
    let cli = Cli::from_arg_matches(&matches)?;
    Ok((cli, matches))
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let first = match parse(&argv) {
        Ok((cli, _)) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = merge_config(&argv, &first).and_then(|merged| {
        let (cli, matches) = parse(&merged).map_err(|e| CliError::Validation(format!("--config: {}", e.render())))?;
        commands::run(&cli, &matches)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
