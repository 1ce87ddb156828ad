mod args;
mod commands;
mod config;

use std::process::ExitCode;

use config::Parsed;

fn main() -> ExitCode {
    let command = match config::parse(std::env::args_os().collect()) {
        Parsed::Run(c) => c,
        Parsed::Clap(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
        Parsed::Usage(e) => {
            eprintln!("error: {}", e.0);
            return ExitCode::from(2);
        }
    };
    let level = if command.common().verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
