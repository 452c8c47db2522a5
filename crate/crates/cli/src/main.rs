use clap::Parser;
use repmut_cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
