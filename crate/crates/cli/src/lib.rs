//! Config-driven experiment runner for the toepcov estimators.

pub mod config;
pub mod error;
pub mod run;
pub mod table;

pub use config::{load_config, parse_config, ExperimentConfig, ExperimentKind};
pub use error::{CliError, Result};
pub use run::run_experiment;
pub use table::{read_table, write_table, Cell, ResultTable};
