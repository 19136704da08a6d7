use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use secular_cli::{execute, load_config, Experiment, Overrides};

/// Secular-growth scans and cancellation checks.
///
/// Thread count follows SECULAR_THREADS when set.
#[derive(Parser)]
#[command(name = "secular", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Relative tolerance of the numerical integrals.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Growth of the order-n term of the mass-quench toy model.
    Toy,
    /// Modulus of a two-point function along a time grid.
    Propagator,
    /// Secular growth of a first-order correction.
    SecularScan { model: ScanModel },
    /// Cancellation of the secular terms over random draws.
    CancelCheck { model: CancelModel },
    /// Connected-correlation identity and decay bound.
    CumulantCheck,
    /// t^{3/2} envelope of a two-point function.
    DecayCheck,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScanModel {
    Scalar,
    Dirac,
    Loop,
}

#[derive(Clone, Copy, ValueEnum)]
enum CancelModel {
    Scalar,
    Dirac,
}

fn experiment(c: &Command) -> Experiment {
    match c {
        Command::Toy => Experiment::Toy,
        Command::Propagator => Experiment::Propagator,
        Command::SecularScan { model: ScanModel::Scalar } => Experiment::SecularScalar,
        Command::SecularScan { model: ScanModel::Dirac } => Experiment::SecularDirac,
        Command::SecularScan { model: ScanModel::Loop } => Experiment::SecularLoop,
        Command::CancelCheck { model: CancelModel::Scalar } => Experiment::CancelScalar,
        Command::CancelCheck { model: CancelModel::Dirac } => Experiment::CancelDirac,
        Command::CumulantCheck => Experiment::Cumulant,
        Command::DecayCheck => Experiment::Decay,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("SECULAR_THREADS").ok().and_then(|v| v.parse().ok()) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    let exp = experiment(&cli.command);
    let over = Overrides { seed: cli.seed, rel_tol: cli.tol };
    let outcome = load_config(cli.config.as_deref(), exp, over).and_then(|cfg| execute(exp, &cfg, &cli.out));
    match outcome {
        Ok((result, csv, json)) => {
            println!("{} {}", exp.stem(), result.verdict.label());
            println!("wrote {} and {}", csv.display(), json.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
