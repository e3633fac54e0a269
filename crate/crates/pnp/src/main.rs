use clap::Parser;

use pnp::cli::{cmd_gen_fixture, cmd_run, cmd_sweep, Cli, Cmd};

/// Exit codes: 0 all questions evaluated cleanly, 1 at least one question
/// failed, 2 the command itself could not run.
fn main() {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::GenFixture(args) => cmd_gen_fixture(args),
    };
    match outcome {
        Ok(true) => {}
        Ok(false) => std::process::exit(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
