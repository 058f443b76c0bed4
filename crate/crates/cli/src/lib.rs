//! Driver for batch verification runs: JSON models and configs in, CSV and JSON reports out.

pub mod config;
pub mod error;
pub mod model;
pub mod suite;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use model::{load_model, parse_model, ModelBundle, ModelKind};
