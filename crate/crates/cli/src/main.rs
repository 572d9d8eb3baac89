//! `vpdr`: command-line front end for VPDR simulation, inversion and analysis.
//!
//! Every subcommand reads an optional TOML config, writes its outputs into
//! `--out` and records them with checksums in `manifest.json`.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use vpdr::{Error, Kernel, WindowKind};

use commands::Common;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "vpdr", version, about = "VPDR ensemble magnetometry: simulate, analyse, sweep, optimise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// boxcar, blackman or cosine.
    #[arg(long, global = true)]
    window: Option<WindowKind>,
    /// cos or exp.
    #[arg(long, global = true)]
    kernel: Option<Kernel>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the phase-summed signal grid of the [acquisition] section.
    Simulate,
    /// Inner-product map I(nu, omega) of a grid file.
    Spectrum {
        #[arg(long)]
        input: PathBuf,
        /// start:stop:count in MHz along the pulse-duration axis.
        #[arg(long)]
        nu_mhz: Option<String>,
        /// start:stop:count in MHz along the free-evolution axis.
        #[arg(long)]
        omega_mhz: Option<String>,
    },
    /// Self-calibrated inversion of a grid file.
    Invert {
        #[arg(long)]
        input: PathBuf,
    },
    /// Field-error map over DC field directions.
    SweepAccuracy,
    /// Field error under MW amplitude and direction drift.
    SweepRobustness,
    /// MW direction search for separated Rabi labels.
    OptimizeMw,
    /// Monte-Carlo sensitivity ratios (requires --seed).
    Sensitivity,
    /// Linear-in-voltage field fit from a peak table.
    Reconstruct {
        #[arg(long)]
        input: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidInput("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let c = Common { config, out: cli.out, seed: cli.seed, window: cli.window, kernel: cli.kernel };
    let manifest = match &cli.command {
        Command::Simulate => commands::simulate(&c),
        Command::Spectrum { input, nu_mhz, omega_mhz } => {
            commands::spectrum(&c, input, nu_mhz.as_deref(), omega_mhz.as_deref())
        }
        Command::Invert { input } => commands::invert(&c, input),
        Command::SweepAccuracy => commands::sweep_accuracy(&c),
        Command::SweepRobustness => commands::sweep_robustness(&c),
        Command::OptimizeMw => commands::optimize_mw(&c),
        Command::Sensitivity => commands::sensitivity(&c),
        Command::Reconstruct { input } => commands::reconstruct(&c, input),
    }?;
    for f in &manifest.outputs {
        println!("{}  {}", f.sha256, c.out.join(&f.path).display());
    }
    eprintln!("{} finished in {:.2} s", manifest.command, manifest.wall_time_s);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
