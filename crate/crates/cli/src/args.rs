use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "depthreg",
    version,
    about = "Local multiple-output quantile/depth regression"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Directional hyperplanes for every (tau, w0).
    Fit(RunArgs),
    /// Conditional contours (cuts) for every (tau, w0).
    Cut(RunArgs),
    /// Nested families of cuts over the tau list at each w0.
    Family(FamilyArgs),
    /// Simulated data, cuts and their errors against the population contours.
    Simulate(RunArgs),
    /// Monte Carlo error-versus-n table.
    Rate(RateArgs),
    /// Summary of a CSV file's selected columns.
    IngestInfo(IngestArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Cut(_) => "cut",
            Command::Family(_) => "family",
            Command::Simulate(_) => "simulate",
            Command::Rate(_) => "rate",
            Command::IngestInfo(_) => "ingest-info",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SourceArgs {
    /// Simulation model: parab_sine, parab_homo or parab_quad.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value_t = 999)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Headed CSV file (instead of --model).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub covariate: Option<String>,
    /// Two response columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub responses: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct SmoothingArgs {
    /// constant, bilinear or global.
    #[arg(long, default_value = "bilinear")]
    pub method: String,
    /// gaussian, epanechnikov or uniform.
    #[arg(long, default_value = "gaussian")]
    pub kernel: String,
    /// Fixed bandwidth.
    #[arg(long, conflicts_with = "bandwidth_rule")]
    pub bandwidth: Option<f64>,
    /// `thumb` or `fz:<h>`.
    #[arg(long)]
    pub bandwidth_rule: Option<String>,
    /// `on` or `off`; defaults to on for `fz:<h>` and off otherwise.
    #[arg(long)]
    pub tau_adjust: Option<String>,
    #[arg(long, default_value_t = 360)]
    pub directions: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct OutputArgs {
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads (falls back to DEPTHREG_THREADS).
    #[arg(long, env = "DEPTHREG_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.4")]
    pub tau: Vec<f64>,
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "w0_quantiles",
        allow_hyphen_values = true
    )]
    pub w0: Vec<f64>,
    /// Conditioning points as sample quantiles of the covariate.
    #[arg(long, value_delimiter = ',')]
    pub w0_quantiles: Vec<f64>,
    #[command(flatten)]
    pub smoothing: SmoothingArgs,
    /// Also write the LP of the first direction for every (tau, w0).
    #[arg(long)]
    pub dump_lp: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct FamilyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Keep the raw cuts even when they cross.
    #[arg(long)]
    pub no_repair: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct RateArgs {
    #[arg(long, default_value = "parab_homo")]
    pub model: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub w0: f64,
    #[arg(long, default_value_t = 0.2)]
    pub tau: f64,
    #[arg(long, value_delimiter = ',', default_value = "500,2000,8000")]
    pub ns: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "bilinear")]
    pub method: String,
    #[arg(long, default_value = "gaussian")]
    pub kernel: String,
    /// Bandwidth at `--n-ref`, or at every n without it.
    #[arg(long, default_value_t = 0.37)]
    pub bandwidth: f64,
    /// Scale the bandwidth as `(n / n_ref)^(-1/5)`.
    #[arg(long)]
    pub n_ref: Option<f64>,
    #[arg(long, default_value_t = 360)]
    pub directions: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub covariate: String,
    #[arg(long, value_delimiter = ',')]
    pub responses: Vec<String>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}
