mod args;
mod commands;
mod output;

use std::path::Path;
use std::process::ExitCode;

use clap::Parser;

use lapfield::io::{parse_config_toml, Config};

use args::Cli;
use output::{parse_file, resolve_paths, CliError, CliResult};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lapfield {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::input("thread count must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::input(format!("cannot configure {n} threads: {e}")))?;
    }
    let config = resolve_config(cli)?;
    let prov = output::provenance(cli.command.name(), &config);
    log::info!("seed {} config sha256 {}", prov.seed, prov.config_sha256);
    commands::run(&cli.command, &config, &prov)
}

fn resolve_config(cli: &Cli) -> CliResult<Config> {
    let mut config = match &cli.config {
        Some(path) => {
            let mut c = parse_file(path, parse_config_toml)?;
            resolve_paths(&mut c, path.parent().unwrap_or(Path::new("")));
            c
        }
        None => Config::default(),
    };
    cli.apply(&mut config);
    config.validate()?;
    Ok(config)
}
