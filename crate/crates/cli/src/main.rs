//! `semid`: train item encoders, quantize representations into semantic IDs and analyse the
//! resulting code tables.

mod commands;
mod config;
mod logging;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use log::LevelFilter;

use semid::diagnostics::DiagnosticsError;
use semid::famae::FamaeError;
use semid::gaoq::QuantizeError;

use commands::*;
use config::{merge, ConfigFile, UsageError};

#[derive(Parser, Debug)]
#[command(
    name = "semid",
    version,
    about = "Semantic-ID tokenization for generative recommendation"
)]
struct Cli {
    /// TOML file with a `[subcommand]` table of defaults; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 1 gives bit-stable runs.
    #[arg(long, global = true, env = "RSID_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "info")]
    log_level: LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split interactions and write per-split pair corpora.
    Prepare(PrepareArgs),
    /// Train the masked-field encoder.
    Train(TrainArgs),
    /// Recall of a checkpoint on one split.
    Eval(EvalArgs),
    /// Write per-item representations from a checkpoint.
    Extract(ExtractArgs),
    /// Turn representations into semantic IDs.
    Quantize(QuantizeArgs),
    /// Entropy, intra-code cosine and overlap statistics of a SID table.
    Diagnose(DiagnoseArgs),
    /// Check the representation sufficiency bound on enumerable toys.
    BoundCheck(BoundCheckArgs),
    /// Estimate dominant FLOPs of each stage.
    Cost(CostArgs),
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if let Some(n) = cli.threads.or(config.threads()) {
        if n == 0 {
            return Err(config::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    log::info!("threads {}", rayon::current_num_threads());
    match cli.command {
        Command::Prepare(a) => prepare(merge(&a, &config, "prepare")?),
        Command::Train(a) => train(merge(&a, &config, "train")?),
        Command::Eval(a) => eval(merge(&a, &config, "eval")?),
        Command::Extract(a) => extract(merge(&a, &config, "extract")?),
        Command::Quantize(a) => quantize(merge(&a, &config, "quantize")?),
        Command::Diagnose(a) => diagnose(merge(&a, &config, "diagnose")?),
        Command::BoundCheck(a) => bound_check(merge(&a, &config, "bound-check")?),
        Command::Cost(a) => cost(merge(&a, &config, "cost")?),
    }
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<UsageError>()
            || matches!(e.downcast_ref::<FamaeError>(), Some(FamaeError::Config(_)))
            || matches!(e.downcast_ref::<QuantizeError>(), Some(QuantizeError::Config(_)))
            || matches!(e.downcast_ref::<DiagnosticsError>(), Some(DiagnosticsError::Shape(_)))
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    logging::init(cli.log_level);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}
