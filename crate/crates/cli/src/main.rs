use std::process::ExitCode;

use clap::Parser;
use tgifa::cli::{threads_from_env, Cli};
use tgifa::run::run_with_threads;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|threads| run_with_threads(&cli, threads));
    match result {
        Ok(files) => {
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
