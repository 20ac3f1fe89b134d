use clap::Parser;

fn main() {
    std::process::exit(uhfflow::run(uhfflow::Cli::parse()));
}
