use clap::Parser;

fn main() {
    let cli = nap_cli::Cli::parse();
    if let Err(e) = nap_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
