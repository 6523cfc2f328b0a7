use clap::Parser;

use inout::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("inout: {e}");
        std::process::exit(e.exit_code());
    }
}
