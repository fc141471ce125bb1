//! Command-line front end for reproducible benchmark runs.
//!
//! Exit codes: 0 ok, 2 config error, 3 strict-audit failure, 4 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use eegbench::cli;

#[derive(Parser)]
#[command(name = "eegbench", version, about = "Cross-subject EEG decoding benchmark engine")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic epoch archive from the [synth] config section.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Archive prefix (writes <out>.json and <out>.f32).
        #[arg(long)]
        out: PathBuf,
        /// Also write a per-subject EDF fixture tree here.
        #[arg(long)]
        edf_root: Option<PathBuf>,
    },
    /// Parse a BIDS-like tree of EDF files into an epoch archive.
    Ingest {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate the configured models (LOSO or within-subject).
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (results are identical at any degree).
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// One LOSO run per grid point along an ablation axis.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// feature_family | time_window | channel_region | pca
        #[arg(long)]
        axis: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Temporal generalization matrix.
    Tgm {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Statistics battery over a results directory.
    Stats {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n_perm: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Chance level override (default: 1/K from predictions.csv).
        #[arg(long)]
        chance: Option<f64>,
    },
    /// Aggregate results into a summary table.
    Report {
        #[arg(long)]
        results: PathBuf,
    },
    /// Task-level analyses: pairwise vowels, RSA, electrode importance,
    /// channel dropout, ERP, learning curve.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        parallel: Option<usize>,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match &args.command {
        Command::Synth { config, out, edf_root } => {
            cli::cmd_synth(config, out, edf_root.as_deref())
        }
        Command::Ingest { root, out, config } => cli::cmd_ingest(root, out, config),
        Command::Run { config, out, parallel } => cli::cmd_run(config, out, *parallel),
        Command::Ablate {
            config,
            axis,
            out,
            parallel,
        } => cli::cmd_ablate(config, axis, out, *parallel),
        Command::Tgm { config, out, parallel } => cli::cmd_tgm(config, out, *parallel),
        Command::Stats {
            results,
            n_perm,
            seed,
            chance,
        } => cli::cmd_stats(results, *n_perm, *seed, *chance),
        Command::Report { results } => cli::cmd_report(results),
        Command::Analyze { config, out, parallel } => cli::cmd_analyze(config, out, *parallel),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: category={} message={e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
