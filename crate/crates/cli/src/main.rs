mod args;
mod commands;
mod config;
mod error;
mod output;

use args::{Cli, Command};
use clap::Parser;
use config::RunConfig;
use error::CliError;
use std::process::ExitCode;

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("SPECTRA_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::input(format!("SPECTRA_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::input(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run() -> Result<(), CliError> {
    let argv = config::expand_config(std::env::args_os().collect())?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print().ok();
            if code == 0 {
                return Ok(());
            }
            return Err(CliError {
                code: 2,
                message: String::new(),
            });
        }
    };
    init_threads()?;
    let cmd = &cli.command;
    let common = cmd.common();
    if !(common.tol > 0.0 && common.tol < 1.0) {
        return Err(CliError::input("--tol must lie in (0, 1)"));
    }
    let config = RunConfig::from_json(cmd.name(), &cmd.to_json());
    let table = match cmd {
        Command::Bands(a) => commands::bands(a),
        Command::Density(a) => commands::density(a),
        Command::Prufer(a) => commands::prufer(a),
        Command::WkbError(a) => commands::wkb_error(a),
        Command::Mlinear(a) => commands::mlinear(a),
        Command::Ortho(a) => commands::ortho(a),
        Command::Martingale(a) => commands::martingale(a),
        Command::Mcheck(a) => commands::mcheck(a),
    }?;
    let text = output::render(&table, &config, common.format);
    output::emit(&text, common.out.as_deref())?;
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !e.message.is_empty() {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.code)
        }
    }
}
