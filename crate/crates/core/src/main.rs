use std::process::ExitCode;

use clap::Parser;
use filterlab::cli::{apply_thread_limit, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = apply_thread_limit().and_then(|_| run(cli, &mut std::io::stdout().lock()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
