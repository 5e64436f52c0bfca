//! `erc-lab`: command-line entry point for corpus checks, training runs,
//! K sweeps, ablations, discourse-marker analysis and reporting.

mod args;
mod commands;
mod report;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use erc_core::error::ErrorClass;

use args::{Cli, Command, StatsCommand};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let outcome = match cli.command {
        Command::ValidateCorpus(a) => commands::validate_corpus(&a),
        Command::CorpusStats(a) => commands::corpus_stats(&a),
        Command::Train(a) => commands::train(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::DmAnalyze(a) => commands::dm_analyze(&a),
        Command::Stats {
            command: StatsCommand::Selftest,
        } => commands::stats_selftest(),
        Command::Gradcheck(a) => commands::gradcheck(&a),
        Command::Report(a) => report::run(&a),
        Command::Synth(a) => commands::synth(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numeric => 3,
            })
        }
    }
}
