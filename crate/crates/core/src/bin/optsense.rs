use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use optsense::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match run(&cli) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let written = match &cli.output {
        Some(path) => std::fs::write(path, &out.csv),
        None => std::io::stdout().lock().write_all(out.csv.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write output: {e}");
        return ExitCode::from(1);
    }
    for line in &out.summary {
        eprintln!("{line}");
    }
    ExitCode::SUCCESS
}
