use clap::Parser;

use mssp_econ::cli::{configure_workers, run, Cli, EXIT_USAGE};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = configure_workers() {
        eprintln!("{e}");
        std::process::exit(EXIT_USAGE);
    }
    std::process::exit(run(&cli));
}
