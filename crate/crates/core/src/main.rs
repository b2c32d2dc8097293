use clap::Parser;
use sle4lab::cli::app::{main_with, Cli};

fn main() {
    std::process::exit(main_with(Cli::parse()));
}
