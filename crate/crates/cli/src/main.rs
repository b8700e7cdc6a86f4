mod commands;
mod output;
mod si;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{
    BodeArgs, CompareArgs, LimitCycleArgs, OpcondArgs, PmArgs, RootsArgs, SimulateArgs,
};
use crate::output::Sink;

/// Analysis and simulation of comparator/counter/DAC potentiostat loops.
///
/// Numeric options accept SI prefixes (p n u m k M G); bare numbers are in
/// base SI units.
#[derive(Debug, Parser)]
#[command(name = "potloop", version)]
struct Cli {
    /// Emit a JSON document with an embedded run manifest.
    #[arg(long, global = true)]
    json: bool,

    /// Write the result to this file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Suppress summaries and warnings.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Open-loop frequency response, one curve per sampling frequency.
    Bode(BodeArgs),
    /// Phase margin and gain crossover.
    Pm(PmArgs),
    /// Closed-loop root locus against the effective loop gain.
    Roots(RootsArgs),
    /// Time-domain simulation of the loop with step metrics.
    Simulate(SimulateArgs),
    /// Describing-function limit-cycle prediction.
    Limitcycle(LimitCycleArgs),
    /// Sampling-frequency windows for a phase-margin band.
    Opcond(OpcondArgs),
    /// Predicted against simulated limit cycles over a resistance sweep.
    Compare(CompareArgs),
}

const EXIT_IO: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DOMAIN: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<potloop::Error>() {
        Some(e) if e.is_domain() => EXIT_DOMAIN,
        Some(potloop::Error::Io(_)) => EXIT_IO,
        Some(_) => EXIT_USAGE,
        None if err.downcast_ref::<std::io::Error>().is_some() => EXIT_IO,
        None => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let sink = Sink {
        json: cli.json,
        out: cli.out,
        quiet: cli.quiet,
    };
    let result = match &cli.command {
        Command::Bode(a) => commands::bode(a, &sink),
        Command::Pm(a) => commands::pm(a, &sink),
        Command::Roots(a) => commands::roots(a, &sink),
        Command::Simulate(a) => commands::simulate(a, &sink),
        Command::Limitcycle(a) => commands::limitcycle(a, &sink),
        Command::Opcond(a) => commands::opcond(a, &sink),
        Command::Compare(a) => commands::compare(a, &sink),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        let domain = anyhow::Error::new(potloop::Error::NoCrossover);
        assert_eq!(exit_code(&domain), EXIT_DOMAIN);
        let usage = anyhow::Error::new(potloop::Error::EmptyInput("x"));
        assert_eq!(exit_code(&usage), EXIT_USAGE);
        let io = anyhow::Error::new(std::io::Error::other("disk"));
        assert_eq!(exit_code(&io), EXIT_IO);
    }
}
