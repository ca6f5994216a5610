mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use artifacts::Format;

#[derive(Parser)]
#[command(name = "equihop", version, about = "Equivalent solutions of binary latent feature models")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct GlobalArgs {
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads for trial-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Format of tabular outputs; matrices are always CSV.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Generate X, Z* and W* from a generator spec (--config).
    Synth,
    /// Fit Z and W with the alternating MAP baseline.
    Fit(commands::FitArgs),
    /// Move a solution through its equivalence class toward lower prior cost.
    Hop(commands::HopArgs),
    /// Enumerate every equivalent Z of a small binary matrix.
    Enumerate(commands::EnumerateArgs),
    /// Report feature pairs whose co-occurrence admits equivalent solutions.
    PdcScan(commands::PdcScanArgs),
    /// Hamming and regularizer metrics of a solution.
    Metrics(commands::MetricsArgs),
    /// Count equivalent solutions over a grid of sizes (--config).
    CountExperiment,
    /// Pair-condition statistics for a set of multi-label files.
    Survey(commands::SurveyArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if cli.global.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(1);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.global.jobs).build_global() {
        log::warn!("thread pool already initialized: {e}");
    }
    let g = &cli.global;
    let result = match cli.command {
        Command::Synth => commands::synth(g),
        Command::Fit(a) => commands::fit(g, &a),
        Command::Hop(a) => commands::hop(g, &a),
        Command::Enumerate(a) => commands::enumerate(g, &a),
        Command::PdcScan(a) => commands::pdc_scan(g, &a),
        Command::Metrics(a) => commands::metrics(g, &a),
        Command::CountExperiment => commands::count_experiment(g),
        Command::Survey(a) => commands::survey(g, &a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
