use clap::Parser;

fn main() {
    let cli = arcorr_cli::Cli::parse();
    std::process::exit(arcorr_cli::run(&cli));
}
