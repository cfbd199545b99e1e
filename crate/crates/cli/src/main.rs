mod commands;
mod error;
mod settings;

use std::process::ExitCode;

use clap::Parser;

use settings::{Cli, Command, Settings};

fn run(cli: Cli) -> Result<(), error::CliError> {
    let settings = Settings::resolve(cli.command, cli.flags)?;
    match settings.command {
        Command::Classify => commands::classify(&settings),
        Command::Probe => commands::probe(&settings),
        Command::Embed => commands::embed(&settings),
        Command::Lda => commands::lda(&settings),
        Command::Freq => commands::freq(&settings),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("morphoprobe: {e}");
            e.exit_code()
        }
    }
}
