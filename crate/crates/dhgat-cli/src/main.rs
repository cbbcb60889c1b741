use clap::Parser;

fn main() {
    let cli = dhgat_cli::cli::Cli::parse();
    if let Err(e) = dhgat_cli::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
