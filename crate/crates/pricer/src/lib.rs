//! Batch pricer for the SABR-LIBOR market model PDE engine: configuration
//! parsing, run orchestration and convergence-table output.

pub mod config;
pub mod error;
pub mod run;

pub use config::{parse_config, Reference, RunConfig, TechniqueKind};
pub use error::{CliError, Result};
pub use run::{format_table, run, to_csv, write_csv_atomic, RunOutput, TableRow, CSV_HEADER};
