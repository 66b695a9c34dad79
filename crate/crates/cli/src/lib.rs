//! File formats, checkpointing, timing and the command-line harness around
//! `streamtile-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod matrix_io;
pub mod publish;
pub mod timing;

pub use config::RunConfig;
pub use error::{HarnessError, Result};
