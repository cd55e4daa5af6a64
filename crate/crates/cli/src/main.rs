//! Command-line surface tying the checkpoint-arithmetic, judging,
//! metrics, and ensemble subsystems into end-to-end flows.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 infrastructure
//! error.

mod cmd_judge;
mod cmd_metrics;
mod cmd_sweep;
mod cmd_weights;
mod config;
mod errors;
mod prompt;
mod report;

use clap::Parser;
use errors::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "frontier",
    version,
    about = "Checkpoint weight arithmetic and a resource-limited code-judging harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand, Debug)]
enum Command {
    /// Linear interpolation/extrapolation between two checkpoints.
    Merge(cmd_weights::MergeArgs),
    /// Compose a checkpoint from layers of two endpoints at a cutpoint.
    Stitch(cmd_weights::StitchArgs),
    /// Replace a contiguous layer range with donor layers.
    Swap(cmd_weights::SwapArgs),
    /// Spectral and per-layer analysis of a delta checkpoint.
    Geom {
        #[command(subcommand)]
        cmd: cmd_weights::GeomCmd,
    },
    /// Judge submissions in the sandbox and classify outcomes.
    Judge(cmd_judge::JudgeArgs),
    /// Re-run optimization failures under an extended time budget.
    Reclassify(cmd_judge::ReclassifyArgs),
    /// Shaped rewards and policy identity checks.
    Reward {
        #[command(subcommand)]
        cmd: cmd_metrics::RewardCmd,
    },
    /// Pass@k-family estimators and related statistics.
    Metrics {
        #[command(subcommand)]
        cmd: cmd_metrics::MetricsCmd,
    },
    /// Pool coverage, selection, and transfer evaluation.
    Ensemble {
        #[command(subcommand)]
        cmd: cmd_metrics::EnsembleCmd,
    },
    /// Merge-judge-tabulate across an alpha grid.
    Sweep(cmd_sweep::SweepArgs),
    /// Emit the standard CSV report bundle from stored tables.
    Report(cmd_sweep::ReportArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Merge(args) => cmd_weights::merge(args),
        Command::Stitch(args) => cmd_weights::stitch(args),
        Command::Swap(args) => cmd_weights::swap(args),
        Command::Geom { cmd } => cmd_weights::geom(cmd),
        Command::Judge(args) => cmd_judge::judge(args),
        Command::Reclassify(args) => cmd_judge::reclassify(args),
        Command::Reward { cmd } => cmd_metrics::reward(cmd),
        Command::Metrics { cmd } => cmd_metrics::metrics(cmd),
        Command::Ensemble { cmd } => cmd_metrics::ensemble(cmd),
        Command::Sweep(args) => cmd_sweep::sweep(args),
        Command::Report(args) => cmd_sweep::report(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
