//! Command-line front end of [`sibvp`]: `solve`, `march`, `bounds` and `tables`.
//!
//! Exit codes: 0 on success, 2 on a configuration error, 3 when a solver or
//! the output fails. Failures print `{"error": {...}}` on stderr.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;

pub use args::{Cli, Command, Format, Method, RunConfig};
pub use commands::{solve_troesch, troesch_bounds, SolveReport, SolveSpec};
pub use error::CliError;

/// Validates the arguments and runs the subcommand.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::from_cli(cli)?;
    match cfg.command {
        Command::Solve => commands::cmd_solve(&cfg),
        Command::March => commands::cmd_march(&cfg),
        Command::Bounds => commands::cmd_bounds(&cfg),
        Command::Tables => {
            for path in commands::cmd_tables(&cfg)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}
