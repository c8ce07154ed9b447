//! `pdrl`: generate data, train residual heads, fit baselines, score
//! datasets, and evaluate uncertainty quality.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 I/O error.

mod args;
mod commands;

use args::{Cli, Cmd, ConfigFile};
use clap::error::ErrorKind;
use clap::Parser;
use pdrl_core::Error;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };

    if let Err(e) = init_thread_pool() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

/// PDRL_THREADS caps internal parallelism; unset means the rayon default.
fn init_thread_pool() -> pdrl_core::Result<()> {
    if let Ok(value) = std::env::var("PDRL_THREADS") {
        let threads: usize = value.parse().map_err(|_| {
            Error::InvalidInput(format!("PDRL_THREADS must be a positive integer, got '{value}'"))
        })?;
        if threads == 0 {
            return Err(Error::InvalidInput("PDRL_THREADS must be positive".into()));
        }
        // A second initialization (tests call this repeatedly) is harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    Ok(())
}

fn run(cli: Cli) -> pdrl_core::Result<()> {
    let config = ConfigFile::load(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Gen(a) => commands::gen(a, &config),
        Cmd::Train(a) => commands::train(a, &config),
        Cmd::Baseline(a) => commands::baseline(a, &config),
        Cmd::Score(a) => commands::score(a, &config),
        Cmd::EnsembleScore(a) => commands::ensemble_score(a),
        Cmd::Eval(a) => commands::eval(a, &config),
        Cmd::Ood(a) => commands::ood(a, &config),
        Cmd::Pca(a) => commands::pca(a, &config),
    }
}
