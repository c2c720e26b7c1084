use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seaflow::Command;

/// Stationary maritime-flow equilibria and their calibration from flow data.
#[derive(Parser)]
#[command(name = "seaflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Args)]
struct Saved {
    #[command(flatten)]
    common: Common,
    /// Directory holding the saved results; defaults to the output directory.
    #[arg(long)]
    from: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve the mean-field equilibrium of the configured model.
    Solve(Common),
    /// Build the representative linear system and judge existence/uniqueness.
    Check(Common),
    /// Calibrate transport, congestion and values from a flow file.
    Infer(Common),
    /// Generate a synthetic instance and its daily flows.
    Simulate(Common),
    /// Re-verify a saved equilibrium against the configured model.
    Validate(Saved),
    /// Turn saved results into plot-ready tables.
    Report(Saved),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, config, from) = match cli.command {
        Sub::Solve(c) => (Command::Solve, c.config, None),
        Sub::Check(c) => (Command::Check, c.config, None),
        Sub::Infer(c) => (Command::Infer, c.config, None),
        Sub::Simulate(c) => (Command::Simulate, c.config, None),
        Sub::Validate(s) => (Command::Validate, s.common.config, s.from),
        Sub::Report(s) => (Command::Report, s.common.config, s.from),
    };
    let outcome = seaflow::run(command, &config, from.as_deref());
    ExitCode::from(outcome.exit_code)
}
