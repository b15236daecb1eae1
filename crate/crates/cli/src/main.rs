use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use poisson_kit::family::DEFAULT_SAMPLES;
use poisson_kit_cli::{
    cmd_casimirs, cmd_integrate, cmd_preset, cmd_rank, cmd_reduce, cmd_validate, configure_threads,
    CliError, IntegrateArgs, Mode, Output, THREADS_ENV,
};

/// Certify, reduce and integrate separable Poisson structures.
#[derive(Debug, Parser)]
#[command(name = "poisson-kit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Direct,
    Reduced,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the hypotheses and the Jacobi, rank and kernel certificates.
    Validate {
        config: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify the Darboux chart.
    Reduce {
        config: PathBuf,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the Hamiltonian flow and write a CSV trajectory.
    Integrate {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        x0: Vec<f64>,
        #[arg(long)]
        t_end: f64,
        #[arg(long)]
        step: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Direct)]
        mode: ModeArg,
        /// CSV path; with `--mode both`, `.direct` and `.reduced` are
        /// inserted before the extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the config of a built-in instance.
    Preset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Singular values of J at a point (box center by default).
    Rank {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        at: Option<Vec<f64>>,
    },
    /// Closed-form Casimirs and their values at a point.
    Casimirs {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        at: Option<Vec<f64>>,
    },
}

fn run(cli: Cli) -> Result<Output, CliError> {
    configure_threads(std::env::var(THREADS_ENV).ok().as_deref())?;
    match cli.command {
        Command::Validate { config, samples, seed, out } => cmd_validate(&config, samples, seed, out.as_deref()),
        Command::Reduce { config, samples, seed, out } => cmd_reduce(&config, samples, seed, out.as_deref()),
        Command::Integrate { config, x0, t_end, step, mode, out } => cmd_integrate(IntegrateArgs {
            config: &config,
            x0: &x0,
            t_end,
            step,
            mode: match mode {
                ModeArg::Direct => Mode::Direct,
                ModeArg::Reduced => Mode::Reduced,
                ModeArg::Both => Mode::Both,
            },
            out: out.as_deref(),
        }),
        Command::Preset { name, out } => cmd_preset(&name, out.as_deref()),
        Command::Rank { config, at } => cmd_rank(&config, at.as_deref()),
        Command::Casimirs { config, at } => cmd_casimirs(&config, at.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(output) => {
            print!("{}", output.stdout);
            if let Some(msg) = output.stderr {
                eprintln!("{msg}");
            }
            ExitCode::from(output.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
