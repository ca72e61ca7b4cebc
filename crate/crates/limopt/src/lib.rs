//! File formats and the experiment command line for `limopt-core`.
//!
//! * [`data_io`]: MNIST IDX parsing, run-record CSV files and SVG charts.
//! * [`cli`]: the `run`, `variance`, `sweep`, `plot` and `check` commands.

pub mod cli;
pub mod data_io;
mod error;

pub use error::{Error, Result};
