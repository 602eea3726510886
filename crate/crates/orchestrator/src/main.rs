use clap::Parser;

fn main() {
    let cli = rflab::cli::Cli::parse();
    if let Err(e) = rflab::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
