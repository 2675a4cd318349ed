use std::process::ExitCode;

use clap::Parser;
use sudest_cli::args::Cli;
use sudest_cli::{commands, exit_code_for};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(status) => ExitCode::from(status.code()),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
