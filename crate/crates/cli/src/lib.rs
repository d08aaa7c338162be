//! Configuration handling and the pipeline commands behind the `lcs` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{load, Config, LoadedConfig};
pub use error::CliError;
