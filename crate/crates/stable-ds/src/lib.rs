//! Files, reports and the command-line front end around [`stable_ds_core`].

pub mod cli;
pub mod dataset;
mod error;
pub mod persist;
pub mod report;
pub mod svg;

pub use error::{Error, Result};
