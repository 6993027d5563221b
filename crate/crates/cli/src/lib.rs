//! Batch front-end for the `slip` binary: run configuration, the region
//! cache and the subcommands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod store;

pub use commands::{CliError, CliResult};
pub use config::{ConfigError, RunConfig};
pub use store::{RegionKey, ResultStore};
