//! Configuration, artifact persistence and the run driver behind the `llab`
//! binary.

pub mod config;
pub mod error;
pub mod run;

pub use config::{Experiment, RunConfig};
pub use error::CliError;
pub use run::{run, verify_run, Manifest, RunSummary};
