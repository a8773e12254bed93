//! Command-line front end of `ablayer`: parameter scans over the layer
//! operator with CSV, JSON and SVG output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;

use ablayer::Error;
use anyhow::Result;

use config::{read_config, Cli, FileConfig, RunConfig};

/// Process exit code for an error raised anywhere in a run.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<Error>() {
        Some(Error::Parameter(_) | Error::Mismatch(_)) => 2,
        Some(Error::NoConvergence { .. } | Error::Factorization { .. }) => 3,
        Some(Error::InsufficientPoints { .. }) => 4,
        Some(Error::NonPositiveEstimate { .. }) => 5,
        _ => 1,
    }
}

/// Merges the config file under the flags and validates the result.
pub fn resolve(cli: Cli) -> Result<RunConfig> {
    let file = match &cli.config {
        Some(p) => read_config(p)?,
        None => FileConfig::default(),
    };
    let command = cli
        .command
        .or(file.command)
        .ok_or_else(|| Error::Parameter("no command given, on the command line or in the config file".into()))?;
    let cfg = RunConfig::resolve(command, cli.settings.merged_over(file.settings));
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    commands::dispatch(&cfg)
}
