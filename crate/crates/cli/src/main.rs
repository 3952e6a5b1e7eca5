// SPDX-License-Identifier: Apache-2.0

//! `shiftleak`: lock, stitch, attack and report on bench netlists.
//!
//! Exit status: 0 on success (partial key recovery included), 1 on usage or
//! parse errors, 2 on internal failures.

mod commands;
mod config;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Error caused by the caller's input rather than by the program.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug, Parser)]
#[command(name = "shiftleak", version, about = "Scan-chain key leakage lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic sequential benchmark.
    Generate(commands::GenerateArgs),
    /// Insert key gates; writes the locked bench, the key and a lock report.
    Lock(commands::LockArgs),
    /// Stitch flops and secure cells of a locked bench into scan chains.
    Stitch(commands::StitchArgs),
    /// Run the key-recovery attack against a simulated chip.
    Attack(commands::AttackArgs),
    /// Overhead and coverage table for DFS and MSSD instrumentation.
    Report(commands::ReportArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = std::panic::catch_unwind(|| match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Lock(a) => commands::lock(a),
        Command::Stitch(a) => commands::stitch(a),
        Command::Attack(a) => commands::attack(a),
        Command::Report(a) => commands::report(a),
    });
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) if e.is::<Usage>() => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Ok(Err(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
        Err(_) => ExitCode::from(2),
    }
}
