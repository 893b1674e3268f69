//! `w2reg` command-line tool.
//!
//! Exit codes: 0 success, 2 usage, 3 configuration, 4 data, 5 I/O, 6 runtime.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const OUT_ROOT_ENV: &str = "W2REG_OUT_ROOT";
pub const DEFAULT_OUT_ROOT: &str = "w2reg-out";

#[derive(Debug, Parser)]
#[command(name = "w2reg", version, about = "Audit and reduce per-class TPR gaps with a W2 penalty")]
struct Cli {
    /// More log output (-v info, -vv debug). Logs go to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Default parent directory for outputs.
    #[arg(long, global = true, env = OUT_ROOT_ENV, default_value = DEFAULT_OUT_ROOT)]
    out_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset (data.csv, schema.json, summary.json, spec.json).
    Generate(GenerateArgs),
    /// Train the baseline and, when a class needs it, the regularized model.
    Train(TrainArgs),
    /// Audit a checkpoint on a dataset.
    Audit(AuditArgs),
    /// Run the pipeline for several seeds and/or shared λ values.
    Sweep(SweepArgs),
    /// Export plot-ready tables from run directories.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Synthetic spec JSON.
    #[arg(long, conflicts_with = "acceptance", required_unless_present = "acceptance")]
    spec: Option<PathBuf>,
    /// Use the built-in acceptance spec (4 classes, 10 features, class_3 biased).
    #[arg(long)]
    acceptance: bool,
    /// Overrides the seed of the synthetic spec file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: <out-root>/data].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
struct DataArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// CSV schema JSON [default: schema.json next to the data file, if present].
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
struct ConfigArgs {
    /// Training config JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Shared λ; clears any lambda_grid from the config.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Stop after the baseline audit and class selection.
    #[arg(long)]
    baseline_only: bool,
    /// Run directory [default: <out-root>/run-seed<SEED>].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model checkpoint JSON.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Write the report JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the per-class CSV summary.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
    seeds: Vec<u64>,
    /// Comma-separated shared λ values; each gets its own run per seed.
    #[arg(long, value_delimiter = ',')]
    lambdas: Vec<f64>,
    /// Parallel jobs [default: available cores].
    #[arg(long)]
    jobs: Option<usize>,
    /// Sweep directory [default: <out-root>/sweep].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run directories, or directories whose subdirectories are runs.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Report directory [default: <first input>/report].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Generate(a) => commands::generate(&cli.out_root, a),
        Command::Train(a) => commands::train(&cli.out_root, a),
        Command::Audit(a) => commands::audit(a),
        Command::Sweep(a) => commands::sweep(&cli.out_root, a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("w2reg: error[{}]: {}", e.kind(), message);
            ExitCode::from(e.code())
        }
    }
}
