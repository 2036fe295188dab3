#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! File formats, experiment sweeps and the `stiefel-shoot` command line
//! for the `stiefel-log` crate.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod pi;
pub mod report;

pub use cli::{run, Cli};
pub use error::{CliError, CliResult, Outcome};
