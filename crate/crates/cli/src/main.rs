use clap::Parser;

fn main() {
    let cli = ablayer_cli::config::Cli::parse();
    if let Err(e) = ablayer_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(ablayer_cli::exit_code(&e));
    }
}
