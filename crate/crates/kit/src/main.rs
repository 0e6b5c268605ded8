use clap::Parser;

fn main() {
    let cli = resonance_kit::Cli::parse();
    std::process::exit(resonance_kit::execute(&cli));
}
