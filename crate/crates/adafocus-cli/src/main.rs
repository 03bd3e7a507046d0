//! Command-line front end: single-query runs, manifest benchmarks,
//! archive packing, and archive inspection.
//!
//! Exit codes: 0 clean, 1 when pipeline entries failed, 2 for
//! configuration or file-format problems.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "adafocus",
    version,
    about = "Confidence-gated video question answering over indexed frame archives"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one query against an archive, or every entry of a manifest
    Run(RunArgs),
    /// Sweep retrieval window widths over a manifest and tabulate metrics
    Bench(BenchArgs),
    /// Build an archive plus embedding sidecar from a directory of frame files
    Pack(PackArgs),
    /// Print an archive's header, index summary, and payload digest
    Inspect(InspectArgs),
}

/// Pipeline hyperparameters; unset flags keep the defaults.
#[derive(Args, Debug, Clone)]
struct ParamArgs {
    /// Preview keyframe budget
    #[arg(long)]
    k_base: Option<usize>,
    /// Temporal diversity decay per second
    #[arg(long)]
    alpha: Option<f64>,
    /// Probability-domain confidence threshold (keeps gamma0 in sync)
    #[arg(long)]
    tau: Option<f64>,
    /// Log-domain confidence threshold base (overrides the tau sync)
    #[arg(long, allow_negative_numbers = true)]
    gamma0: Option<f64>,
    /// Length-calibration slope of the confidence threshold
    #[arg(long)]
    beta: Option<f64>,
    /// Routing threshold on max relevance
    #[arg(long, allow_negative_numbers = true)]
    tau_global: Option<f64>,
    /// Refinement round cap
    #[arg(long)]
    n_max: Option<u32>,
    /// Visual tokens charged per evidence frame
    #[arg(long)]
    tokens_per_frame: Option<u32>,
    /// Seed for every randomized component
    #[arg(long)]
    seed: Option<u64>,
    /// Query embedding dimension; inferred from the sidecar when unset
    #[arg(long)]
    embed_dim: Option<usize>,
}

impl ParamArgs {
    fn build(&self) -> adafocus::types::PipelineConfig {
        let mut config = adafocus::types::PipelineConfig::default();
        if let Some(tau) = self.tau {
            config = config.with_tau(tau);
        }
        if let Some(gamma0) = self.gamma0 {
            config.gamma0 = gamma0;
        }
        if let Some(beta) = self.beta {
            config.beta = beta;
        }
        if let Some(k_base) = self.k_base {
            config.k_base = k_base;
        }
        if let Some(alpha) = self.alpha {
            config.alpha = alpha;
        }
        if let Some(tau_global) = self.tau_global {
            config.tau_global = tau_global;
        }
        if let Some(n_max) = self.n_max {
            config.n_max = n_max;
        }
        if let Some(tokens) = self.tokens_per_frame {
            config.tokens_per_frame = tokens;
        }
        if let Some(seed) = self.seed {
            config.rng_seed = seed;
        }
        config
    }
}

#[derive(Args, Debug)]
struct BackendArgs {
    /// Answer model: "sim" (deterministic local) or "http"
    #[arg(long, default_value = "sim", value_parser = ["sim", "http"])]
    backend: String,
    /// Inference server URL for the http backend; the
    /// ADAFOCUS_BACKEND_ENDPOINT variable fills in when unset
    #[arg(long)]
    backend_endpoint: Option<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Frame archive for a single-query run
    #[arg(long, conflicts_with = "manifest", requires = "query")]
    archive: Option<PathBuf>,
    /// Embedding sidecar; defaults to the archive path with .faem
    #[arg(long, requires = "archive")]
    sidecar: Option<PathBuf>,
    /// Question to answer in a single-query run
    #[arg(long, conflicts_with = "manifest")]
    query: Option<String>,
    /// Dataset manifest (JSON) to run entry by entry
    #[arg(long, required_unless_present = "archive")]
    manifest: Option<PathBuf>,
    /// Inference strategy: baseline, cot_only, adafocus, dense_oracle,
    /// or random_retrieval
    #[arg(long, default_value = "adafocus")]
    mode: String,
    /// Re-think budget for cot_only mode
    #[arg(long, default_value_t = 1)]
    cot_rounds: u32,
    /// Payload I/O: "zero-cache" reads only what the run touches,
    /// "preload" reads everything up front
    #[arg(long, default_value = "zero-cache", value_parser = ["zero-cache", "preload"])]
    io: String,
    /// Retrieval window half-width in seconds
    #[arg(long)]
    delta_w: Option<f64>,
    /// Concurrent workers for manifest runs
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Write line-delimited JSON traces to this path, or "-" for stdout
    #[arg(long)]
    trace: Option<String>,
    /// Write the aggregate report as JSON to this path, or "-" for stdout
    #[arg(long)]
    report_json: Option<String>,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Dataset manifest (JSON)
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated window half-widths to sweep
    #[arg(long, value_delimiter = ',', default_value = "0.5,1.5,2.5")]
    delta_w: Vec<f64>,
    /// Inference strategy to sweep
    #[arg(long, default_value = "adafocus")]
    mode: String,
    /// Re-think budget for cot_only mode
    #[arg(long, default_value_t = 1)]
    cot_rounds: u32,
    /// Payload I/O mode
    #[arg(long, default_value = "zero-cache", value_parser = ["zero-cache", "preload"])]
    io: String,
    /// Concurrent workers per sweep setting
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Also run the dense oracle and print token-footprint comparisons
    #[arg(long)]
    compare_dense: bool,
    /// Write the sweep report as JSON to this path, or "-" for stdout
    #[arg(long)]
    report_json: Option<String>,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args, Debug)]
struct PackArgs {
    /// Directory of frame payload files, packed in file-name order
    #[arg(long)]
    input: PathBuf,
    /// Output archive path; the sidecar lands next to it with .faem
    #[arg(long)]
    output: PathBuf,
    /// Frames per second encoded into the archive header
    #[arg(long, default_value_t = 1.0)]
    fps: f64,
    /// Sidecar embedding dimension
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Embedding seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Archive to inspect
    archive: PathBuf,
    /// Machine-readable output
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => commands::run(args),
        Command::Bench(args) => commands::bench(args),
        Command::Pack(args) => commands::pack(args),
        Command::Inspect(args) => commands::inspect(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(2)
        }
    }
}
