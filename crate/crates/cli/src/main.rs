use clap::Parser;

fn main() {
    let cli = toboggan_cli::Cli::parse();
    std::process::exit(toboggan_cli::main_with(&cli));
}
