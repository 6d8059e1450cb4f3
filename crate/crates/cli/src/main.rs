use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let code = phlab::cli::run(phlab::cli::Args::parse());
    ExitCode::from(code as u8)
}
