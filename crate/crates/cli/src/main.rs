//! `undertrack` command-line tool.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "undertrack",
    version,
    about = "Accelerometer-based positioning for underground trains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Detector settings shared by the subcommands that run the detector.
#[derive(Debug, Args)]
pub struct DetectorArgs {
    /// Preset name (worldwide, london, cologne) or a parameter JSON file.
    #[arg(long, default_value = "worldwide")]
    pub params: String,
    /// Sampling rate of the input; sample-count parameters are rescaled
    /// when it differs from the parameters' nominal rate.
    #[arg(long)]
    pub rate_hz: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run signal processing and motion detection on one trace.
    Detect {
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        detector: DetectorArgs,
        /// Output directory for transitions.csv and magnitudes.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline for one trip and write its event log.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        route: PathBuf,
        #[arg(long)]
        origin: String,
        #[arg(long)]
        destination: String,
        #[command(flatten)]
        detector: DetectorArgs,
        /// Optional ground truth to score the trip against.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 30.0)]
        tolerance_s: f64,
        /// Output directory for events.jsonl and summary.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic traces with ground truth.
    Simulate(commands::SimulateArgs),
    /// Score a corpus of traces against their ground truth.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        detector: DetectorArgs,
        #[arg(long, default_value_t = 30.0)]
        tolerance_s: f64,
        /// Report file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-search detector parameters on a corpus.
    Tune {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        tolerance_s: f64,
        /// Output directory for best-params.json and table.csv.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> error::Result<()> {
    match cli.command {
        Command::Detect {
            trace,
            detector,
            out,
        } => commands::detect(&trace, &detector, &out),
        Command::Replay {
            trace,
            route,
            origin,
            destination,
            detector,
            truth,
            tolerance_s,
            out,
        } => commands::replay(
            &commands::ReplayInput {
                trace,
                route,
                origin,
                destination,
                truth,
                tolerance_s,
                out,
            },
            &detector,
        ),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Evaluate {
            corpus,
            detector,
            tolerance_s,
            out,
        } => commands::evaluate(&corpus, &detector, tolerance_s, &out),
        Command::Tune {
            corpus,
            grid,
            tolerance_s,
            out,
        } => commands::tune(&corpus, &grid, tolerance_s, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
