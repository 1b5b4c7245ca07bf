//! Experiment runner for `htcontrol`.
//!
//! The `htctl` binary is a thin wrapper over this library: configuration
//! parsing and fingerprinting ([`config`]), bit-stable CSV/JSON files
//! ([`output`]), the `run`/`sweep`/`certify` commands ([`commands`]) and the
//! oracle self-test ([`selftest`]).
//!
//! Exit codes follow [`CliError::exit_code`]: 0 success, 1 numerical or
//! contract failure, 2 usage, config or I/O error.

pub mod commands;
pub mod config;
mod error;
pub mod output;
pub mod selftest;

pub use error::{CliError, CliResult};
