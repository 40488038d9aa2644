use clap::Parser;

fn main() {
    let cli = patchaug::cli::Cli::parse();
    if let Err(e) = patchaug::cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
