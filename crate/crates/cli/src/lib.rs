//! Command-line front end for the foodgmm pipeline.
//!
//! `foodgmm <synth|fit|select|profile> [--config FILE] [--key value ...]`
//!
//! Every setting can come from a flat config file (see [`config`]) and be
//! overridden by a flag of the same name, written with dashes. Exit codes:
//! 0 success, 1 usage, 2 data error, 3 numerical failure.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::fs;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Arg, ArgMatches, Command};

use config::{flag_name, key_table, parse_config, Settings};
use error::{CliError, CliResult, EXIT_OK, EXIT_USAGE};

const SUBCOMMANDS: [(&str, &str); 4] = [
    ("synth", "Generate a synthetic scenario"),
    ("fit", "Fit one mixture and write its assignments"),
    ("select", "Search models and component counts by BIC"),
    ("profile", "Profile the clusters of a fitted model"),
];

pub fn command() -> Command {
    let keys = key_table();
    let mut root = Command::new("foodgmm")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Gaussian mixture clustering of family-to-agency distances")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for (name, about) in SUBCOMMANDS {
        let mut sub = Command::new(name).about(about).arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .value_name("FILE")
                .help("flat `key = value` settings file"),
        );
        for k in &keys {
            let flag = flag_name(k.name);
            let help = if k.default.is_empty() {
                k.help.to_string()
            } else {
                format!("{} [default: {}]", k.help, k.default)
            };
            let mut arg = Arg::new(k.name).long(flag.clone()).value_name("VALUE").help(help);
            if flag != k.name {
                arg = arg.alias(k.name);
            }
            sub = sub.arg(arg);
        }
        root = root.subcommand(sub);
    }
    root
}

/// Defaults, then the config file, then flags.
pub fn resolve_settings(matches: &ArgMatches) -> CliResult<Settings> {
    let mut settings = Settings::default();
    if let Some(path) = matches.get_one::<String>("config") {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        for (k, v) in parse_config(&text, path)? {
            settings.set(&k, &v)?;
        }
    }
    for k in key_table() {
        if let Some(v) = matches.get_one::<String>(k.name) {
            settings.set(k.name, v)?;
        }
    }
    Ok(settings)
}

fn dispatch(name: &str, matches: &ArgMatches) -> CliResult<()> {
    let settings = resolve_settings(matches)?;
    let threads = settings.threads()?;
    if threads > 0 {
        // fails only when a pool already exists, e.g. on a second call in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match name {
        "synth" => commands::cmd_synth(&settings).map(drop),
        "fit" => commands::cmd_fit(&settings).map(drop),
        "select" => commands::cmd_select(&settings).map(drop),
        "profile" => commands::cmd_profile(&settings).map(drop),
        other => Err(CliError::Usage(format!("unknown command `{other}`"))),
    }
}

/// Runs the tool and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    match dispatch(name, sub) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("foodgmm {name}: error: {e}");
            e.exit_code()
        }
    }
}
