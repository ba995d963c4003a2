use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pseudomode::cli::{self, RunOptions, EXIT_FAILURE};
use pseudomode::config::RunConfig;

/// Multi-time correlations of open quantum systems with pseudomode baths.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// JSON run configuration; its `command` key selects the workflow.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Reserved; nothing in this release is stochastic.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_FAILURE as u8);
        }
    }
    let cfg = match RunConfig::from_path(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE as u8);
        }
    };
    let opts = RunOptions { output: args.output, threads: args.threads, seed: args.seed };
    match cli::run(&cfg, &opts) {
        Ok(outcome) => {
            if !outcome.passed {
                eprintln!("validation failed; see {}", outcome.output_dir.join("report.json").display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE as u8)
        }
    }
}
