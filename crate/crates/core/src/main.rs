use clap::Parser;
use gaussruin::cli;

fn main() {
    cli::init_thread_pool();
    let args = cli::Cli::parse();
    std::process::exit(cli::run(&args));
}
