use std::process::exit;

fn main() {
    exit(adaptive_pool::cli::run_cli(std::env::args()));
}
