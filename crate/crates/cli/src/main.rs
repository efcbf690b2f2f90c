use clap::error::ErrorKind;
use clap::Parser;
use sibvp_cli::{Cli, CliError};

fn main() {
    let result = match Cli::try_parse() {
        Ok(cli) => sibvp_cli::run(&cli),
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or_default();
            Err(CliError::Config(first.trim_start_matches("error: ").to_string()))
        }
    };
    if let Err(e) = result {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}
