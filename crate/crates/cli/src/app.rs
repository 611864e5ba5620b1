//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{value_parser, Arg, ArgMatches, Command};
use thiserror::Error;
use trainloop::reweight::{oracle_battery, ReweightError};

use crate::config::{ConfigError, Settings, KEYS};
use crate::report::{report_dir, ReportError};
use crate::study::{gte_only, simulate, StudyError};

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Cli(#[from] clap::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Oracle(#[from] ReweightError),
}

fn with_config_keys(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("FILE")
            .value_parser(value_parser!(PathBuf))
            .help("key = value configuration file"),
    );
    KEYS.iter().fold(cmd, |cmd, (key, help)| {
        cmd.arg(Arg::new(*key).long(*key).value_name("VALUE").help(*help))
    })
}

pub fn command() -> Command {
    Command::new("trainloop")
        .about("Simulate A/B tests on a recommender that retrains on its own traffic")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(with_config_keys(
            Command::new("simulate").about("Run every design × replication and write CSVs, gte.json and plots"),
        ))
        .subcommand(with_config_keys(
            Command::new("gte").about("Compute the global treatment effect from paired global runs"),
        ))
        .subcommand(
            Command::new("oracle")
                .about("Check the propensity-weight identities on random finite spaces (JSON report)")
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .default_value("0")
                        .value_parser(value_parser!(u64)),
                )
                .arg(
                    Arg::new("spaces")
                        .long("spaces")
                        .default_value("100")
                        .value_parser(value_parser!(usize)),
                )
                .arg(
                    Arg::new("perturbations")
                        .long("perturbations")
                        .default_value("100")
                        .value_parser(value_parser!(usize)),
                ),
        )
        .subcommand(
            Command::new("report")
                .about("Print fixed-width tables from a study directory")
                .arg(
                    Arg::new("dir")
                        .value_name("DIR")
                        .required(true)
                        .value_parser(value_parser!(PathBuf)),
                ),
        )
}

/// Settings from `--config` overlaid with explicit `--key` flags.
pub fn settings(matches: &ArgMatches) -> Result<Settings, ConfigError> {
    let mut settings = match matches.get_one::<PathBuf>("config") {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    for (key, _) in KEYS {
        if let Some(v) = matches.get_one::<String>(key) {
            settings.set(key, v)?;
        }
    }
    Ok(settings)
}

/// Parse `args` and run the subcommand. Returns the text for stdout.
pub fn run<I, T>(args: I) -> Result<String, AppError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = command().try_get_matches_from(args)?;
    match matches.subcommand() {
        Some(("simulate", m)) => {
            let spec = settings(m)?.into_spec()?;
            let (_, written) = simulate(&spec)?;
            let mut out = String::new();
            for path in written {
                out.push_str(&format!("wrote {}\n", path.display()));
            }
            if spec.replications < 2 {
                out.push_str("summary.csv skipped: spread needs at least 2 replications\n");
            }
            Ok(out)
        }
        Some(("gte", m)) => {
            let spec = settings(m)?.into_spec()?;
            let (truth, _) = gte_only(&spec)?;
            Ok(truth.to_json(spec.is_aa()))
        }
        Some(("oracle", m)) => {
            let report = oracle_battery(
                *m.get_one::<u64>("seed").expect("defaulted"),
                *m.get_one::<usize>("spaces").expect("defaulted"),
                *m.get_one::<usize>("perturbations").expect("defaulted"),
            )?;
            Ok(serde_json::to_string_pretty(&report).expect("plain JSON") + "\n")
        }
        Some(("report", m)) => Ok(report_dir(m.get_one::<PathBuf>("dir").expect("required"))?),
        _ => unreachable!("subcommand_required"),
    }
}
