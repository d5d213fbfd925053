//! Experiment drivers, file formats and the command line for least-squares
//! Laplace eigenvalue computations built on `lseig-core`.

pub mod config;
pub mod error;
pub mod experiments;
pub mod formats;
pub mod refdata;
pub mod table;

pub use error::{CliError, Result};
