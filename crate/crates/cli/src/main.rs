//! `depthcal`: feasibility tables, class enumeration, offline bundles and
//! synthetic or tracked-point calibration.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "depthcal", version, about = "Camera autocalibration from point depths")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file; most commands write to stdout without it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Feasibility of every intrinsics pattern in two and three views, as CSV.
    Table,
    /// One representative per isomorphism class of colorings, as JSONL.
    Enumerate(commands::EnumerateArgs),
    /// Rank certificate of a relaxation at synthetic points, as JSON.
    Certify(commands::CertifyArgs),
    /// Monodromy discovery of all solutions; writes a start-system bundle.
    SolveOffline(commands::SolveOfflineArgs),
    /// Synthetic scene and observations, as JSON.
    Simulate(commands::SimulateArgs),
    /// MSAC calibration of tracked points with a bundle.
    Calibrate(commands::CalibrateArgs),
    /// Synthetic trials over a noise grid, one CSV row per trial.
    Eval(commands::EvalArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Table => commands::table(&cli.global),
        Command::Enumerate(a) => commands::enumerate(&cli.global, a),
        Command::Certify(a) => commands::certify(&cli.global, a),
        Command::SolveOffline(a) => commands::solve_offline(&cli.global, a),
        Command::Simulate(a) => commands::simulate(&cli.global, a),
        Command::Calibrate(a) => commands::calibrate(&cli.global, a),
        Command::Eval(a) => commands::eval(&cli.global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
