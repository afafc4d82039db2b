use std::process::ExitCode;

use atsdf_pipeline::cli::Cli;
use atsdf_pipeline::{run, PipelineError};
use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = cli.resolve(std::env::vars()).and_then(|cfg| run(&cfg));
    match result {
        Ok(summary) => {
            log::info!("completed stages: {}", summary.stages.join(", "));
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &PipelineError) -> ExitCode {
    log::error!("{e}");
    match serde_json::to_string(&e.report()) {
        Ok(json) => println!("{json}"),
        Err(_) => println!("{{\"kind\":\"{}\"}}", e.kind()),
    }
    ExitCode::from(e.exit_code() as u8)
}
