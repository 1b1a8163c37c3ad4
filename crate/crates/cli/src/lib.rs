//! The `amten` command-line tool: corpus forging, training, evaluation,
//! gradient checks, trace dumps, ablations and robustness studies.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod stamp;

pub use commands::{run, Cli};
pub use config::RunConfig;
pub use error::{CliError, Result};
