//! Command-line front end: argument parsing, config files, exit codes and
//! the report pipeline.

pub mod args;
pub mod commands;
pub mod config;
pub mod data;
pub mod exit;
pub mod report;

use std::ffi::OsString;
use std::io::Write;

use clap::{CommandFactory, FromArgMatches};

use crate::args::{Cli, Command};
use crate::exit::Failure;

/// Parse `args` (program name first), run the command and return the exit
/// code. Command output goes to `out`, diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match parse(args) {
        Ok(cli) => cli,
        Err(f) => return report_failure(&f),
    };
    init_logging(cli.verbose);
    match dispatch(&cli.command, out) {
        Ok(()) => exit::SUCCESS,
        Err(f) => report_failure(&f),
    }
}

fn report_failure(f: &Failure) -> i32 {
    if !f.message.is_empty() {
        eprintln!("error: {}", f.message.trim_end());
    }
    f.code
}

pub fn parse(args: Vec<OsString>) -> Result<Cli, Failure> {
    let root = Cli::command();
    let merged = config::merge(&root, args)?;
    let root = root.mut_subcommands(|s| s.args_override_self(true));
    let matches = root.try_get_matches_from(merged).map_err(clap_failure)?;
    Cli::from_arg_matches(&matches).map_err(clap_failure)
}

fn clap_failure(e: clap::Error) -> Failure {
    use clap::error::ErrorKind;
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            let _ = e.print();
            Failure::new(
                if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                    exit::USAGE
                } else {
                    exit::SUCCESS
                },
                "",
            )
        }
        _ => Failure::usage(e.render().to_string().trim_start_matches("error: ").trim_end()),
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
}

pub fn dispatch(cmd: &Command, out: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::Descriptive(a) => commands::descriptive(a, out),
        Command::Fit(a) => commands::fit(a, out),
        Command::Events(a) => commands::events_cmd(a, out),
        Command::Welch(a) => commands::welch(a, out),
        Command::Simulate(a) => commands::simulate(a, out),
        Command::Report(a) => report::report(a, out),
        Command::Fetch(a) => commands::fetch(a, out),
    }
}
