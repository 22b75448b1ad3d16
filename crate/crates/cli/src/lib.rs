//! Command-line front end: configuration parsing, run orchestration and
//! plot-ready output files.

pub mod commands;
pub mod config;
pub mod io;
pub mod report;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

use clap::{Arg, ArgMatches};

pub use commands::{run_command, CliError};
pub use config::{build_run_config, Command, ConfigError, RunConfig};

fn cli() -> clap::Command {
    let mut root = clap::Command::new("qdimer")
        .about("Steady states, stability and photon-number spectra of coupled χ(2) waveguides in a cavity")
        .version(commands::VERSION)
        .subcommand_required(true)
        .arg_required_else_help(true);
    for command in Command::ALL {
        let mut sub = clap::Command::new(command.name())
            .about(command.about())
            .arg(
                Arg::new("config")
                    .long("config")
                    .value_name("FILE")
                    .help("flat `key = value` file; flags override its keys"),
            );
        for (key, help) in config::KEYS {
            if config::allowed_for(command, key) {
                sub = sub.arg(
                    Arg::new(*key)
                        .long(*key)
                        .value_name("VALUE")
                        .help(*help)
                        .allow_negative_numbers(true),
                );
            }
        }
        if command == Command::Compare {
            sub = sub.arg(
                Arg::new("recheck")
                    .long("recheck")
                    .value_name("REPORT")
                    .help("recompute the verdicts of a stored report from its files"),
            );
        }
        root = root.subcommand(sub);
    }
    root
}

/// Merge config-file keys with flags; flags win.
pub fn merged_values(
    matches: &ArgMatches,
    command: Command,
) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = match matches.get_one::<String>("config") {
        Some(path) => config::read_config_file(Path::new(path))?,
        None => BTreeMap::new(),
    };
    for (key, _) in config::KEYS {
        if !config::allowed_for(command, key) {
            continue;
        }
        if let Some(v) = matches.get_one::<String>(key) {
            map.insert(key.to_string(), v.clone());
        }
    }
    Ok(map)
}

/// Resolve a configuration from arguments (without the program name).
pub fn parse_config<I, T>(args: I, env_seed: Option<&str>) -> Result<RunConfig, String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv = std::iter::once(OsString::from("qdimer")).chain(args.into_iter().map(Into::into));
    let matches = cli()
        .try_get_matches_from(argv)
        .map_err(|e| e.to_string())?;
    let (name, sub) = matches.subcommand().ok_or("missing command")?;
    let command: Command = name.parse()?;
    let map = merged_values(sub, command).map_err(|e| e.to_string())?;
    build_run_config(command, map, env_seed).map_err(|e| e.to_string())
}

/// Full program: returns the process exit code.
pub fn main_with_args(args: Vec<OsString>, env_seed: Option<String>) -> i32 {
    let argv = std::iter::once(OsString::from("qdimer")).chain(args);
    let matches = match cli().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let command: Command = name.parse().expect("registered command");
    let mut out = String::new();
    let mut warnings = Vec::new();
    let result = match sub.try_get_one::<String>("recheck").ok().flatten() {
        Some(report) => commands::recheck_report(Path::new(report), &mut out),
        None => merged_values(sub, command)
            .and_then(|map| build_run_config(command, map, env_seed.as_deref()))
            .map_err(CliError::from)
            .and_then(|cfg| run_command(&cfg, &mut out, &mut warnings)),
    };
    print!("{out}");
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
