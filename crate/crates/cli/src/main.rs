use clap::Parser;

fn main() {
    let cli = wsnsim_cli::Cli::parse();
    if let Err(e) = wsnsim_cli::dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
