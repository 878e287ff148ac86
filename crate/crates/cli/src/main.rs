use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hiquant_cli::{execute, load_config, Command, SEED_ENV};

/// Hierarchical multi-agent backtest engine.
#[derive(Parser)]
#[command(name = "hiquant", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set macro.lambda=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Run directory; every output goes here.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let seed = std::env::var(SEED_ENV).ok();
    let result = load_config(&cli.config, &cli.set, seed.as_deref()).and_then(|c| execute(cli.command, &c, &cli.out));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
