use clap::Parser;
use fasctrack_cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
