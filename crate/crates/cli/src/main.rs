//! `kslyap`: simulate the Kuramoto–Sivashinsky equation, compute Lyapunov
//! spectra, run sweeps over domain length and fit the results.

mod config;
mod fit;
mod lyap;
mod output;
mod simulate;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kslyap_core::{BoundaryCondition, Scheme};

use crate::config::{ConfigFile, RangeSpec, RealList};

#[derive(Parser)]
#[command(name = "kslyap", version, about = "Lyapunov spectra of the Kuramoto-Sivashinsky equation")]
struct Cli {
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write u(x, t) on a uniform time grid.
    Simulate(SimulateArgs),
    /// Compute one Lyapunov spectrum.
    Lyap(LyapArgs),
    /// Compute spectra over a grid of domain lengths.
    Sweep(SweepArgs),
    /// Windowed statistics and power-law fits of swept exponents.
    Fit(FitArgs),
    /// Kaplan-Yorke dimension against domain length, with a linear fit.
    Dky(DkyArgs),
}

#[derive(Args, Clone, Default)]
pub struct DomainArgs {
    /// Boundary condition: periodic or odd.
    #[arg(long)]
    pub bc: Option<BoundaryCondition>,
    /// Domain length.
    #[arg(long = "L")]
    pub length: Option<f64>,
    /// Largest wavenumber the grid must resolve.
    #[arg(long)]
    pub kmax: Option<f64>,
}

#[derive(Args, Clone, Default)]
pub struct SpectrumArgs {
    /// Number of exponents.
    #[arg(long)]
    pub m: Option<usize>,
    /// Transient discarded before accumulation.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Time between reorthonormalisations.
    #[arg(long = "T")]
    pub interval: Option<f64>,
    /// Number of reorthonormalisations.
    #[arg(long = "N")]
    pub intervals: Option<usize>,
    /// Perturbation size.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Integrator step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// etdrk4, imex-cnab2 or rk4.
    #[arg(long)]
    pub scheme: Option<Scheme>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// Final time.
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    /// Output sampling interval.
    #[arg(long = "dt-out")]
    pub dt_out: Option<f64>,
    /// Output file; standard output if absent.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args)]
pub struct LyapArgs {
    /// ks, lorenz or diaglin.
    #[arg(long)]
    pub system: Option<String>,
    /// Rates of the diagonal linear system, comma separated.
    #[arg(long)]
    pub rates: Option<RealList>,
    #[command(flatten)]
    pub domain: DomainArgs,
    #[command(flatten)]
    pub spectrum: SpectrumArgs,
    /// Compare spectra for several reorthonormalisation intervals.
    #[arg(long = "scan-T")]
    pub scan_t: Option<RealList>,
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub bc: Option<BoundaryCondition>,
    #[arg(long = "L-start")]
    pub l_start: Option<f64>,
    #[arg(long = "L-end")]
    pub l_end: Option<f64>,
    #[arg(long = "dL")]
    pub dl: Option<f64>,
    #[arg(long)]
    pub kmax: Option<f64>,
    #[command(flatten)]
    pub spectrum: SpectrumArgs,
    /// Worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<String>,
    /// Keep the rows already in `--out` and compute only the missing ones;
    /// without it an existing file is recomputed from scratch.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args)]
pub struct FitArgs {
    /// Sweep results files.
    pub inputs: Vec<String>,
    /// Restrict to one boundary condition.
    #[arg(long)]
    pub bc: Option<BoundaryCondition>,
    /// Window centres, comma separated.
    #[arg(long)]
    pub centers: Option<RealList>,
    /// Window half-width.
    #[arg(long)]
    pub halfwidth: Option<f64>,
    /// Exponent grid for the power law, start:step:end.
    #[arg(long = "p-grid")]
    pub p_grid: Option<RangeSpec>,
    /// Output base name.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args)]
pub struct DkyArgs {
    pub inputs: Vec<String>,
    #[arg(long)]
    pub bc: Option<BoundaryCondition>,
    /// Smallest L entering the linear fit.
    #[arg(long = "Lmin-fit")]
    pub l_min_fit: Option<f64>,
    #[arg(long)]
    pub out: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    let run = || -> anyhow::Result<()> {
        let file = cli.config.as_deref().map(ConfigFile::load).transpose()?;
        let file = file.as_ref();
        match &cli.command {
            Command::Simulate(a) => simulate::run(a, file),
            Command::Lyap(a) => lyap::run(a, file),
            Command::Sweep(a) => sweep::run(a, file),
            Command::Fit(a) => fit::run_fit(a, file),
            Command::Dky(a) => fit::run_dky(a, file),
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
