//! The `ayn` command line: argument resolution and subcommands.

mod commands;
pub mod settings;

use std::ffi::OsString;

pub use settings::{resolve, Invocation, Resolution, UsageError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Runs `argv` (program name first) and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut inv = match resolve(argv) {
        Ok(inv) => inv,
        Err(Resolution::Clap(e)) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
        Err(Resolution::Error(e)) => {
            eprintln!("error: {e:#}");
            return EXIT_USAGE;
        }
    };
    match commands::dispatch(&mut inv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
