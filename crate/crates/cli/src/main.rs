//! `nirvana`: encode, decode, inspect and benchmark patch-network video streams.

mod args;
mod commands;
mod config;
mod fail;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use fail::Failure;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests print to stdout and succeed.
            let code = if e.use_stderr() { fail::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if std::env::var("NIRVANA_DETERMINISTIC").is_ok_and(|v| v == "1") {
        nirvana::tensor::set_deterministic(true);
    } else {
        nirvana::tensor::set_deterministic(false);
    }
    let result = match &cli.command {
        Command::Encode(a) => commands::encode(a),
        Command::Decode(a) => commands::decode(a),
        Command::Info(a) => commands::info(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
