//! `fcpd`: generate synthetic tensors, decompose them, ask the unfolding
//! advisor, print closed-form bounds and run Monte Carlo benchmarks.

mod commands;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fcp_core::FcpError;

/// Exit codes.
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "fcpd", version, about = "Fast CP decomposition through tensor unfolding")]
struct Cli {
    /// Worker threads for Monte Carlo runs and kernels. 1 keeps everything
    /// on the calling thread.
    #[arg(long, global = true, env = "FCPD_THREADS", default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    /// Leading singular vectors of each unfolding.
    Svd,
    Random,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a noisy tensor with prescribed collinearity and write it together
    /// with the true factors.
    Generate(GenerateArgs),
    /// Decompose a tensor file.
    Decompose(DecomposeArgs),
    /// Recommend an unfolding from per-mode collinearity.
    Advise(AdviseArgs),
    /// Closed-form bounds for the full tensor and candidate unfoldings.
    Crib(CribArgs),
    /// Run a built-in Monte Carlo experiment.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Mode sizes, e.g. 10,10,10,10,10.
    #[arg(long, value_delimiter = ',', required = true)]
    pub shape: Vec<usize>,
    #[arg(long)]
    pub rank: usize,
    /// One value per mode, or a single value used for every mode.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub collinearity: Vec<f64>,
    /// Signal-to-noise ratio in dB; `inf` for a noiseless tensor.
    #[arg(long, default_value_t = f64::INFINITY)]
    pub snr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Component weights (default all ones).
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Output prefix: writes PREFIX.fcpt and PREFIX.fcpk.
    #[arg(long, short, default_value = "synth")]
    pub output: String,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Tensor file (FCPT).
    pub input: std::path::PathBuf,
    #[arg(long, value_parser = parse_algorithm, default_value = "fcp")]
    pub alg: fcp_core::experiment::Algorithm,
    #[arg(long)]
    pub rank: usize,
    /// Unfolding rule, e.g. "1,(2,3),(4,5)". Defaults to the identity rule.
    #[arg(long)]
    pub rule: Option<String>,
    /// Energy threshold for the low-rank block ranks.
    #[arg(long, default_value_t = 0.99)]
    pub tau: f64,
    /// Finish with ALS on the full tensor.
    #[arg(long)]
    pub refine: bool,
    /// Skip Tucker compression before the unfolded CPD.
    #[arg(long)]
    pub no_compress: bool,
    /// Decompose the unfolded tensor with this larger rank.
    #[arg(long)]
    pub overshoot: Option<usize>,
    /// Upper bound on a single block rank in the low-rank split.
    #[arg(long, default_value_t = 10)]
    pub j_max: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Svd)]
    pub init: InitArg,
    /// Independent ALS starts for the (unfolded) CPD; the lowest error wins.
    #[arg(long, default_value_t = 1)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where to write the estimate (FCPK). Defaults to INPUT with extension
    /// `.est.fcpk`.
    #[arg(long, short)]
    pub output: Option<std::path::PathBuf>,
    /// True factors (FCPK); adds angular errors to the report.
    #[arg(long)]
    pub truth: Option<std::path::PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["collinearity", "from"])))]
pub struct AdviseArgs {
    /// Per-mode collinearity.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub collinearity: Option<Vec<f64>>,
    /// Estimate the collinearity from a Kruskal file (FCPK).
    #[arg(long)]
    pub from: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub target_order: usize,
    /// Modes with |c| below this stay unmerged.
    #[arg(long, default_value_t = fcp_core::crib::ORTHOGONALITY_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CribArgs {
    /// Per-mode collinearity, or one value repeated `--order` times.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub collinearity: Vec<f64>,
    /// Tensor order when a single collinearity value is given.
    #[arg(long)]
    pub order: Option<usize>,
    /// Size of the first mode.
    #[arg(long, default_value_t = 10)]
    pub i1: usize,
    /// Noise-to-signal scale: noise variance over squared component weight.
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
    #[arg(long, default_value_t = 2)]
    pub rank: usize,
    /// Extra unfolding rules to bound (rank 2 only). Separate rules with ';'.
    #[arg(long, value_delimiter = ';')]
    pub rules: Vec<String>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Experiment preset: example3, example3b, example7-small (all six
    /// order-6 rows), example7-small/N (row N) or smoke.
    #[arg(long, default_value = "smoke")]
    pub preset: String,
    /// Override the number of repetitions.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Override the base seed; run i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-run CSV (written to stdout when omitted and --format is not csv).
    #[arg(long, short)]
    pub output: Option<std::path::PathBuf>,
    /// Per-component angular errors as CSV.
    #[arg(long)]
    pub sae_output: Option<std::path::PathBuf>,
    /// Include wall-clock seconds in the per-run CSV. Off by default so
    /// that repeated runs produce identical files.
    #[arg(long)]
    pub timing: bool,
    /// Format of the aggregate table.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

fn parse_algorithm(s: &str) -> Result<fcp_core::experiment::Algorithm, String> {
    s.parse().map_err(|e: FcpError| e.to_string())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<FcpError>() {
            return match e {
                FcpError::InvalidArgument(_) => EXIT_USAGE,
                FcpError::Io(_) | FcpError::Format(_) => EXIT_IO,
                _ => EXIT_NUMERIC,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_NUMERIC
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = commands::configure_threads(cli.threads).and_then(|exec| match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Decompose(a) => commands::decompose(&a, exec),
        Command::Advise(a) => commands::advise(&a),
        Command::Crib(a) => commands::crib(&a),
        Command::Bench(a) => commands::bench(&a, exec),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
