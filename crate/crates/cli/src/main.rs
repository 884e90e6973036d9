mod args;
mod build;
mod common;
mod gen;
mod report;
mod stats;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(a) => build::build(a),
        Command::Stats(a) => stats::stats(a),
        Command::Filter(a) => stats::filter(a),
        Command::D4mReport(a) => report::d4m_report(a),
        Command::Bench(a) => build::bench(a),
        Command::Gen(a) => gen::gen(a),
        Command::Mktable(a) => gen::mktable(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
