use std::process::ExitCode;

use clap::Parser;
use usv::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let quiet = cli.command.common().quiet;
    match execute(&cli) {
        Ok(summary) => {
            if !quiet {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
