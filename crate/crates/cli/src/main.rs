mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::commands::Outcome;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Score(c) => commands::score(c),
        Command::Evaluate(c) => commands::evaluate(c),
        Command::Select(c) => commands::select(c),
        Command::Rank(c) => commands::rank(c),
        Command::Summarize(c) => commands::summarize(c),
    };
    match result {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
