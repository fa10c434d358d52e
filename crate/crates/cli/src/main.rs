use std::process::ExitCode;

use clap::Parser;
use elastica_cli::{run, Cli};

fn main() -> ExitCode {
    run(Cli::parse())
}
