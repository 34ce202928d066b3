//! `hashkit` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hashkit::Error;

mod commands;

#[derive(Debug, Parser)]
#[command(name = "hashkit", version, about = "Triplet embeddings and binary hash codes")]
struct Cli {
    /// Worker threads for parallel sections (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutFormat {
    Feat,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled Gaussian blob dataset.
    GenData {
        #[arg(long)]
        classes: u32,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long, default_value_t = 1.0)]
        center_scale: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = OutFormat::Feat)]
        format: OutFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-epoch history as JSON.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Run a checkpoint over a dataset and write sign codes.
    Encode {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the real-valued outputs as a feature file.
        #[arg(long)]
        raw_out: Option<PathBuf>,
    },
    /// Score queries against a database with KNN accuracy and mAP.
    Eval {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        metric: hashkit::Metric,
        #[arg(long)]
        report: PathBuf,
        /// Score only the top ranks in mAP.
        #[arg(long)]
        map_cutoff: Option<usize>,
    },
    /// Print the nearest codes to one database row.
    Query {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        query_row: usize,
        #[arg(long)]
        k: usize,
    },
    /// Write model outputs as CSV rows `label,u0,...`.
    DumpEmbeddings {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Divergence { .. } => 3,
        e if e.is_usage() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
