//! `repgeo` — synthesize and analyze representational geodesics.
//!
//! Subcommands: `transform` (ground-truth paths), `synth` (conditional
//! geodesics), `slice` / `rf` / `deviation` / `compare` (measurements over
//! run directories), `check` (gradient and invariant audits). Every
//! run-producing command writes a `manifest.json` that reproduces the run
//! when passed back via `--config`.

mod args;
mod checks;
mod commands;
mod config;
mod exit;
mod manifest;
mod rundir;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Transform(a) => commands::cmd_transform(a),
        Command::Synth(a) => commands::cmd_synth(a),
        Command::Slice(a) => commands::cmd_slice(a),
        Command::Rf(a) => commands::cmd_rf(a),
        Command::Deviation(a) => commands::cmd_deviation(a),
        Command::Compare(a) => commands::cmd_compare(a),
        Command::Check(a) => commands::cmd_check(a),
    };
    match result {
        Ok(outcome) => std::process::exit(outcome.code()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.code);
        }
    }
}
