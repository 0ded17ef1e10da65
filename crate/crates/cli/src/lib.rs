//! File formats, bundled geography and command implementations for the
//! `gwpcr` binary.

pub mod args;
pub mod commands;
pub mod designs;
pub mod error;
pub mod io;

pub use error::{CliError, Result};
