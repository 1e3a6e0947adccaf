use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

fn main() -> ExitCode {
    let started = Instant::now();
    let cli = match snstat_cli::args::Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits with code 2 on usage errors and 0 for --help/--version.
        Err(e) => e.exit(),
    };
    match snstat_cli::commands::dispatch(cli.command) {
        Ok(report) => {
            print!("{report}");
            // Timing goes to stderr: reports must be byte-identical across
            // repeated runs.
            eprintln!("timing_ms = {}", started.elapsed().as_millis());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
