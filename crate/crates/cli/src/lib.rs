//! Pipeline commands behind the `prpca` binary.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use commands::{cmd_corrupt, cmd_decompose, cmd_evaluate, cmd_register};
pub use config::{PipelineConfig, RegistrationSource, Variant};
pub use error::{CliError, CliResult};
pub use manifest::RunManifest;
