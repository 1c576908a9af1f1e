//! File formats, dataset ingest and the `lcirl` command line on top of
//! `lcirl-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod plot;
pub mod tables;

pub use error::{AppError, AppResult};
