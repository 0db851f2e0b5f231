use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use homsim_cli::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match homsim_cli::run(cli) {
        Ok(text) => {
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("homsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
