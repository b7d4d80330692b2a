//! Configuration, sweeps and result files behind the `cra` command.

pub mod app;
pub mod config;
pub mod error;
pub mod sweep;
pub mod table;

pub use error::{CliError, Result};
