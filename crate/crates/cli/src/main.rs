//! `imbalance`: build speed functions of a stencil workload, check whether
//! balancing is safe, and compute and validate imbalanced partitions.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use imbalance_core::bench::BenchError;
use imbalance_core::partition::{PartitionError, DEFAULT_ORACLE_CAP};
use imbalance_core::workload::WorkloadError;
use imbalance_core::{FpmError, SizeRange};

#[derive(Parser)]
#[command(name = "imbalance", version, about = "Model-based load imbalancing for stencil workloads")]
pub struct Cli {
    /// Seed for the workload's input fields
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Directory for output artifacts and their manifest
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Print JSON instead of text
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure per-team and averaged speed functions (or surfaces when --n is a range)
    Measure {
        #[command(flatten)]
        bench: BenchArgs,
        /// Grid extent along n: a value or start:stop:step
        #[arg(long)]
        n: SizeRange,
        #[arg(long)]
        l: usize,
        /// Sub-domain extents along m, start:stop:step
        #[arg(long)]
        m: SizeRange,
    },
    /// Report whether balancing is provably optimal for a model
    Check {
        #[command(flatten)]
        model: ModelArgs,
        /// Also search for a symmetric imbalance around this balanced share
        #[arg(long)]
        balanced: Option<u64>,
    },
    /// Partition a workload over identical processors
    Partition {
        #[command(flatten)]
        model: ModelArgs,
        /// Total workload in model units
        #[arg(long)]
        total: u64,
        #[arg(long, short)]
        processors: usize,
        #[arg(long, value_enum, default_value_t = Method::Paired)]
        method: Method,
        #[arg(long, conflicts_with_all = ["general", "oracle", "method"])]
        paired: bool,
        #[arg(long, conflicts_with_all = ["paired", "oracle", "method"])]
        general: bool,
        #[arg(long, conflicts_with_all = ["paired", "general", "method"])]
        oracle: bool,
        /// Let processors receive no work
        #[arg(long)]
        allow_idle: bool,
        /// Largest search space the oracle may enumerate
        #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
        oracle_cap: u64,
    },
    /// Predict per-processor times and makespan of given shares
    Predict {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated shares in model units
        #[arg(long, value_delimiter = ',', required = true)]
        shares: Vec<u64>,
    },
    /// Run the workload at several offsets and compare with the model
    Validate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        bench: BenchArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: usize,
        /// Balanced sub-domain extent along m
        #[arg(long)]
        m: usize,
        /// Comma-separated offsets along m; 0 is always included
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
        offsets: Vec<i64>,
    },
    /// Recompute the speedup column of a validation table
    Report {
        /// CSV with offset,theoretical_s,experimental_s,speedup columns
        table: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Paired,
    General,
    Oracle,
}

#[derive(Args)]
pub struct ModelArgs {
    /// Speed-function file, or a surface file with --slice-n
    model: PathBuf,
    /// Treat the file as a surface and cut it at this n
    #[arg(long)]
    slice_n: Option<u64>,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 4)]
    teams: usize,
    /// Threads per team
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 3)]
    min_reps: usize,
    #[arg(long, default_value_t = 30)]
    max_reps: usize,
    /// Target CI half-width relative to the mean
    #[arg(long, default_value_t = 0.05)]
    rel_ci: f64,
    /// Time steps per timed trial
    #[arg(long, default_value_t = 5)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    halo: usize,
    /// Skip the untimed warm-up trial
    #[arg(long)]
    no_warmup: bool,
}

/// Errors caused by bad input rather than a failed run.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<FpmError>() {
            return if matches!(e, FpmError::Parse { .. }) { 2 } else { 1 };
        }
        if let Some(e) = cause.downcast_ref::<PartitionError>() {
            return match e {
                PartitionError::InvalidProblem(_)
                | PartitionError::OddProcessors(_)
                | PartitionError::Misaligned { .. } => 2,
                PartitionError::Model(FpmError::Parse { .. }) => 2,
                _ => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<BenchError>() {
            return match e {
                BenchError::Config(_) | BenchError::Workload(WorkloadError::ThreadCap { .. }) => 2,
                BenchError::Workload(WorkloadError::InvalidDomain(_) | WorkloadError::Config(_)) => 2,
                _ => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<WorkloadError>() {
            return match e {
                WorkloadError::ThreadCap { .. } | WorkloadError::InvalidDomain(_) | WorkloadError::Config(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
