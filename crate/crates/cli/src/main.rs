use std::process::ExitCode;

use clap::Parser;
use gtf_cli::{configure_threads, run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gtf-fuse: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
