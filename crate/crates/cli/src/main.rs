use clap::Parser;

fn main() {
    let cli = grasscap_cli::Cli::parse();
    if let Err(e) = grasscap_cli::main_with(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
