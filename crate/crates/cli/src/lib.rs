//! Batch front end: reads a coefficient file, runs one computation and writes
//! CSV tables, a JSON provenance block and a plotting script.

pub mod config;
pub mod output;
pub mod run;
pub mod specfile;

pub use config::{Command, Grid, Kind, RectArg, RunConfig};
pub use run::{run, Failure, Outcome, EXIT_HYPOTHESIS, EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK};
pub use specfile::{parse_number, parse_spec, parse_spec_file, ParsedSpec, SpecError};

/// Thread count from `BVLAP_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Result<Option<usize>, String> {
    match std::env::var("BVLAP_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("BVLAP_THREADS must be a positive integer, got '{v}'")),
        },
    }
}
