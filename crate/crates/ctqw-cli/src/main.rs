//! `ctqw` — continuous-time quantum walks on ring lattices under dephasing:
//! trajectories, spectra, degeneracy reports, mixing analysis, and sweeps.
//!
//! Exit status: 0 on success, 1 on computational failure, 2 on configuration
//! errors. Identical configurations produce byte-identical output files.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod output;

use commands::CommandKind;
use config::{parse_config_file, resolve, RawConfig};

#[derive(Debug)]
pub enum AppError {
    /// Invalid configuration: exit status 2.
    Config(String),
    /// Valid configuration that failed to compute or write: exit status 1.
    Compute(String),
}

#[derive(Parser)]
#[command(
    name = "ctqw",
    version,
    about = "Continuous-time quantum walks on ring lattices under dephasing",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one trajectory; writes t, P_0..P_{N-1}, tv_to_uniform
    Evolve(CommonArgs),
    /// Write the Bloch energies E_n and the momentum-pair eigenvalues λ_(m,n)
    Spectrum(CommonArgs),
    /// Write the degeneracy partition with first-order correction terms
    Degeneracy(CommonArgs),
    /// Measure mixing times and evaluate the analytic bounds
    Mixing(CommonArgs),
    /// Mixing analysis over the parameter grid declared in the config file
    Sweep(CommonArgs),
}

impl Command {
    fn kind(&self) -> CommandKind {
        match self {
            Command::Evolve(_) => CommandKind::Evolve,
            Command::Spectrum(_) => CommandKind::Spectrum,
            Command::Degeneracy(_) => CommandKind::Degeneracy,
            Command::Mixing(_) => CommandKind::Mixing,
            Command::Sweep(_) => CommandKind::Sweep,
        }
    }

    fn args(self) -> CommonArgs {
        match self {
            Command::Evolve(a)
            | Command::Spectrum(a)
            | Command::Degeneracy(a)
            | Command::Mixing(a)
            | Command::Sweep(a) => a,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Node count N (>= 3)
    #[arg(short = 'n', long)]
    nodes: Option<usize>,

    /// Coupling range l (1 <= l <= floor((N-1)/2)) [default: 2]
    #[arg(short = 'l', long)]
    range: Option<usize>,

    /// Dephasing rate Γ (>= 0); the transmission rate for --method classical
    /// [default: 0.001]
    #[arg(long)]
    gamma: Option<f64>,

    /// Mixing threshold ε in (0, 1) [default: 0.1]
    #[arg(long)]
    epsilon: Option<f64>,

    /// Trajectory horizon [default: 1.5x the instantaneous mixing ceiling]
    #[arg(long = "t-max")]
    t_max: Option<f64>,

    /// Sample spacing [default: t_max / 1000]
    #[arg(long)]
    stride: Option<f64>,

    /// Propagation route: exact|perturbative|coherent|classical [default: exact]
    #[arg(long)]
    method: Option<String>,

    /// Hamiltonian normalisation: section2|gurvitz [default: gurvitz]
    #[arg(long)]
    preset: Option<String>,

    /// Start node j0 [default: 0]
    #[arg(long = "initial-node")]
    initial_node: Option<usize>,

    /// Output file (stdout when omitted; required for sweep)
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,

    /// Output format: csv|json [default: csv]
    #[arg(long)]
    format: Option<String>,

    /// key=value config file; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,

    /// Mixing-time crossing: first|permanent [default: first]
    #[arg(long)]
    mode: Option<String>,
}

impl CommonArgs {
    fn raw(&self) -> RawConfig {
        RawConfig {
            nodes: self.nodes,
            range: self.range,
            gamma: self.gamma,
            epsilon: self.epsilon,
            t_max: self.t_max,
            stride: self.stride,
            method: self.method.clone(),
            preset: self.preset.clone(),
            initial_node: self.initial_node,
            output: self.output.clone(),
            format: self.format.clone(),
            mode: self.mode.clone(),
            ..RawConfig::default()
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    let kind = cli.command.kind();
    let args = cli.command.args();
    let file = match &args.config {
        Some(path) => Some(parse_config_file(path)?),
        None => None,
    };
    let cfg = resolve(args.raw(), file, kind == CommandKind::Sweep)?;

    let mut created: Vec<PathBuf> = Vec::new();
    let result = commands::dispatch(kind, &cfg, &mut created);
    if result.is_err() {
        // no partial outputs on failure
        for path in created {
            let _ = std::fs::remove_file(path);
        }
    }
    result
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(AppError::Config(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(AppError::Compute(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
}
