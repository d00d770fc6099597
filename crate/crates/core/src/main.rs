use std::process::ExitCode;

use clap::Parser;
use ggss_lab::cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            println!("{}", outcome.run_dir.display());
            for id in &outcome.failed_checks {
                eprintln!("check failed: {id}");
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
