use clap::Parser;

fn main() {
    let cli = gridres_cli::Cli::parse();
    if let Err(e) = gridres_cli::run(cli) {
        eprintln!("{e}");
        std::process::exit(2);
    }
}
