//! File formats, configuration and the command-line runs of the seaflow
//! maritime-flow model.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod distances;
pub mod error;
pub mod flows;
pub mod output;
pub mod tables;

use std::path::{Path, PathBuf};

use config::LoadedConfig;
use error::{CliError, Result};
use output::Staged;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Check,
    Infer,
    Simulate,
    Validate,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Check => "check",
            Command::Infer => "infer",
            Command::Simulate => "simulate",
            Command::Validate => "validate",
            Command::Report => "report",
        }
    }
}

/// Outcome of [`run`]: the exit status and where the outputs went.
#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: u8,
    pub output_dir: Option<PathBuf>,
    pub error: Option<CliError>,
}

fn execute(command: Command, cfg: &LoadedConfig, from: Option<&Path>) -> Result<Staged> {
    let from = from.unwrap_or(&cfg.config.paths.output);
    match command {
        Command::Solve => commands::solve(cfg),
        Command::Check => commands::check(cfg),
        Command::Infer => commands::infer(cfg),
        Command::Simulate => commands::simulate(cfg),
        Command::Validate => commands::validate(cfg, from),
        Command::Report => commands::report(from),
    }
}

/// Loads the config, runs one command and writes its outputs, manifest or
/// error record. `from` names the directory of saved results read by
/// `validate` and `report` (default: the output directory).
pub fn run(command: Command, config_path: &Path, from: Option<&Path>) -> RunOutcome {
    let name = command.name();
    let cfg = match LoadedConfig::load(config_path) {
        Ok(cfg) => cfg,
        Err(e) => {
            // Without a config there is no output directory to flag.
            report_error(name, &e, None);
            return RunOutcome {
                exit_code: e.exit_code(),
                output_dir: None,
                error: Some(e),
            };
        }
    };
    let dir = cfg.config.paths.output.clone();
    let result = execute(command, &cfg, from).and_then(|mut staged| {
        output::commit(&dir, name, &cfg, &staged)?;
        Ok(staged.failure.take())
    });
    let error = match result {
        Ok(None) => {
            if let Err(e) = output::remove_if_present(&dir.join(output::error_name(name))) {
                log::warn!("{e}");
            }
            None
        }
        Ok(Some(e)) | Err(e) => {
            report_error(name, &e, Some(&dir));
            Some(e)
        }
    };
    RunOutcome {
        exit_code: error.as_ref().map_or(0, CliError::exit_code),
        output_dir: Some(dir),
        error,
    }
}

fn report_error(command: &str, e: &CliError, dir: Option<&Path>) {
    log::error!("{command}: {e}");
    let record = e.record(command);
    match output::to_json(&record) {
        Ok(bytes) => {
            eprint!("{}", String::from_utf8_lossy(&bytes));
            if let Some(dir) = dir {
                if let Err(w) = output::write_atomic(&dir.join(output::error_name(command)), &bytes) {
                    log::error!("could not write the error record: {w}");
                }
            }
        }
        Err(w) => log::error!("could not serialize the error record: {w}"),
    }
}
