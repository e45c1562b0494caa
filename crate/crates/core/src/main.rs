use clap::Parser;

fn main() {
    let cli = nrirls::cli::Cli::parse();
    std::process::exit(nrirls::cli::run(cli));
}
