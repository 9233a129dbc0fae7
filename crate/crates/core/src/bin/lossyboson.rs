use std::process::ExitCode;

use clap::Parser;
use lossyboson::harness::{run, ExperimentConfig};

fn main() -> ExitCode {
    let mut config = ExperimentConfig::parse();
    let outcome = config.apply_env_seed().and_then(|_| run(&config, &mut std::io::stdout().lock()));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
