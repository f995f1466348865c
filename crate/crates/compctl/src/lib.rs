//! File formats, commands and output plumbing around `compctl-core`.

pub mod commands;
pub mod error;
pub mod formats;
pub mod output;

pub use error::{AppError, AppResult};
