use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inertial_cli::config::DEFAULTS_HELP;
use inertial_cli::output::EXIT_CONFIG;
use inertial_cli::{parse_config, run_and_emit};

#[derive(Parser)]
#[command(name = "inertial", version, about = "Variational time stepping for damped inertial evolutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write CSV/JSON outputs.
    #[command(after_help = DEFAULTS_HELP)]
    Solve {
        /// TOML configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Override the time step.
        #[arg(long)]
        tau: Option<f64>,
        /// Override the number of step halvings.
        #[arg(long)]
        halvings: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Solve { config, tau, halvings, out } = cli.command;
    let mut cfg = match parse_config(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", config.display());
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    if let Some(t) = tau {
        cfg.tau = t;
    }
    if let Some(h) = halvings {
        cfg.halvings = h;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    ExitCode::from(run_and_emit(&cfg) as u8)
}
