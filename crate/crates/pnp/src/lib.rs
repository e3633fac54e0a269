//! File formats, dataset loading, threaded evaluation, and the command
//! line for the question-guided captioning pipeline in `pnp-core`.

pub mod cli;
pub mod container;
pub mod csv_out;
pub mod dataset;
pub mod error;
pub mod fixture;
pub mod pgm;
pub mod ppm;
pub mod report;
pub mod runner;
pub mod schema;

pub use error::{FileError, Result};
