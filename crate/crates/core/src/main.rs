use clap::Parser;
use phdyn_core::cli::{run, Args};

fn main() {
    std::process::exit(run(&Args::parse()));
}
