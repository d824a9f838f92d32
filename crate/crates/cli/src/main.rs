use clap::Parser;
use otlimit_cli::commands::{main_with, Cli};

fn main() {
    std::process::exit(main_with(Cli::parse()));
}
