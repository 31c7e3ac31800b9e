use std::io::ErrorKind;
use std::process::ExitCode;

use casealot_cli::{execute, Cli, CliError};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match execute(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        // the reader went away, as with `| head`
        Err(CliError::Io { source, .. }) if source.kind() == ErrorKind::BrokenPipe => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("casealot: {e}");
            ExitCode::FAILURE
        }
    }
}
