use clap::Parser;

fn main() {
    let cli = swarmplan::cli::Cli::parse();
    std::process::exit(swarmplan::cli::run(cli));
}
