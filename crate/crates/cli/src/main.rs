use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "dpc", version, about = "Differentially private observer-based consensus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Scenario document (JSON)
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for summary.json, CSV tables and SVG plots
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides the scenario and DPC_SEED
    #[arg(long)]
    pub seed: Option<u64>,
    /// Require alpha < modulus < g in the closed forms
    #[arg(long)]
    pub strict_paper: bool,
    /// Truncation tolerance for privacy sums
    #[arg(long)]
    pub tol: Option<f64>,
    /// Format of the report printed on stdout
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral consensus conditions
    Check(Common),
    /// Per-agent contraction moduli
    Moduli(Common),
    /// Privacy level from the series, closed forms and simplified bound
    Epsilon(Common),
    /// Noise decay rates meeting a privacy target
    Design {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eps_star: Option<f64>,
    },
    /// Deterministic privacy ledger for the worst adjacent pair
    Audit(Common),
    /// One realization with trace and norm plots
    Simulate(Common),
    /// Mean-square statistics over many runs
    Montecarlo {
        #[command(flatten)]
        common: Common,
        /// Number of runs (defaults to the scenario's R)
        #[arg(long)]
        runs: Option<usize>,
        /// Rate fit window `LO HI` (defaults to the second half of the horizon)
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        window: Option<Vec<usize>>,
    },
    /// Paired histograms of a message component under adjacent outputs
    Histogram {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        component: usize,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<dpc_core::Error>())
        .map(|e| e.exit_code() as u8)
        .unwrap_or(4)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check(c) => commands::check(&c),
        Command::Moduli(c) => commands::moduli(&c),
        Command::Epsilon(c) => commands::epsilon(&c),
        Command::Design { common, eps_star } => commands::design(&common, eps_star),
        Command::Audit(c) => commands::audit(&c),
        Command::Simulate(c) => commands::simulate(&c),
        Command::Montecarlo { common, runs, window } => {
            commands::montecarlo(&common, runs, window.map(|w| (w[0], w[1])))
        }
        Command::Histogram {
            common,
            k,
            runs,
            component,
        } => commands::histogram(&common, k, runs, component),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
