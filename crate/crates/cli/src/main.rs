use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;
use streamtile::cli::{Cli, Command};
use streamtile::harness;
use streamtile::Result;

fn print<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("report serializes"));
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = cli.overrides.resolve()?;
    match cli.command {
        Command::Run => print(&harness::cmd_run(&cfg)?.summary),
        Command::Bench => print(&harness::cmd_bench(&cfg)?),
        Command::Reduce => print(&harness::cmd_reduce(&cfg)?),
        Command::Simulate => print(&harness::cmd_simulate(&cfg)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
