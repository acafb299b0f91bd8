use clap::Parser;
use dressing_forge::cli::{main_with, Args};

fn main() {
    std::process::exit(main_with(Args::parse()));
}
