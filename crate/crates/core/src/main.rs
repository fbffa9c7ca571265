use clap::Parser;

use epbattery::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("{}", e.record(cli.command.name()));
        std::process::exit(e.exit_code());
    }
}
