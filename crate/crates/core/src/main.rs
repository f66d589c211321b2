use std::process::ExitCode;

use clap::Parser;
use extsource::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) if summary.pass => ExitCode::SUCCESS,
        Ok(summary) => {
            for c in summary.checks.iter().filter(|c| !c.pass) {
                eprintln!("check failed: {} = {:e} (tolerance {:e})", c.check, c.value, c.tolerance);
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
