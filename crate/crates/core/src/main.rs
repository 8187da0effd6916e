use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cdistab::harness::commands::{self, Invocation};
use cdistab::harness::exit;

#[derive(Parser)]
#[command(name = "cdistab", version, about = "Saturated complex double integrator: simulation and Lyapunov verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one closed-loop system and write its trajectory.
    Simulate(Common),
    /// Run a verification suite named in the config.
    Verify(Common),
    /// Run window-decrease checks over an (eps, rho, R) grid.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl From<Common> for Invocation {
    fn from(c: Common) -> Self {
        Invocation { config: c.config, seed: c.seed, out: c.out }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE as u8 } else { exit::PASS as u8 });
        }
    };
    let code = match cli.command {
        Command::Simulate(c) => commands::simulate(&c.into()),
        Command::Verify(c) => commands::verify(&c.into()),
        Command::Sweep(c) => commands::sweep(&c.into()),
    };
    ExitCode::from(code as u8)
}
