use std::process::ExitCode;

use clap::Parser;
use synthforge_cli::cli::{Cli, Command};
use synthforge_cli::commands;
use synthforge_cli::exit::{exit_code, USAGE};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Init => commands::init(&cli.options(None)),
        Command::Gather(f) => commands::gather(&cli.options(Some(f))),
        Command::Design(f) => commands::design(&cli.options(Some(&f.run)), f.trials.map(|n| n as usize), f.no_review),
        Command::Run(f) => commands::run(&cli.options(Some(&f.run)), f.trials.map(|n| n as usize), f.no_review),
        Command::Check { dir } => commands::check(&cli.options(None), dir),
        Command::Replay { dir } => commands::replay(dir),
    };
    match result {
        Ok(outcome) => {
            println!("{}", outcome.message);
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
