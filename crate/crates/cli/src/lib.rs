//! Batch experiment driver: dataset synthesis, matching, evaluation and
//! reporting on top of `geomatch-core`.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod grid_io;

pub use error::{CliError, Result};

/// Caps the rayon pool at `GEOMATCH_THREADS` workers when the variable is
/// set to a positive integer.
pub fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("GEOMATCH_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("GEOMATCH_THREADS: expected a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("GEOMATCH_THREADS: {e}")))
}
