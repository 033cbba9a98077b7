//! Command-line driver: corpus generation, scorer training, decoding,
//! sweeps, analyses and trace rendering.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod args;
pub mod commands;
pub mod config;
pub mod plot;
pub mod render;
pub mod scorer;

use std::ffi::OsString;

use clap::Parser;

use crate::args::Cli;
use crate::config::UsageError;

/// Runs the CLI and returns the process exit code: 0 on success, 1 on a
/// usage error, 2 on a runtime error.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<UsageError>()) {
                1
            } else {
                2
            }
        }
    }
}
