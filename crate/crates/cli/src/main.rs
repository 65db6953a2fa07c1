use std::process::ExitCode;

use clap::Parser;

mod commands;
mod run;

use run::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => commands::train(args),
        Command::Annotate(args) => commands::annotate(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::CompareConfigs(args) => commands::compare_configs(args),
        Command::Gradcheck(args) => commands::gradcheck(args),
        Command::Synth(args) => commands::synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let message = format!("{err:#}").replace('\n', " ");
            eprintln!("error[{}]: {message}", commands::category(&err));
            ExitCode::FAILURE
        }
    }
}
