//! Command-line front end: `ingest`, `train`, `generate`, `evaluate` and
//! `report` over the core library.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod font;
pub mod triptych;

pub use args::Cli;
pub use error::{CliError, Result};

pub fn run(cli: &Cli) -> Result<()> {
    use args::Command;
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Generate(a) => commands::generate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Report(a) => commands::report(a),
    }
}
