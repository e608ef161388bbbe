use std::process::ExitCode;

use clap::Parser;
use optofb_cli::{run, Cli, EXIT_CONFIG};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { EXIT_CONFIG } else { 0 });
        }
    };
    ExitCode::from(run(cli))
}
