use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let args = hho::cli::Args::parse();
    match hho::cli::main_with(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
