//! Experiment runner: configuration, replica fan-out, estimation and
//! artifacts for the `sepwalk` binary.

pub mod config;
pub mod output;
pub mod run;

pub use config::{Config, ConfigError, Mode, Overrides};
pub use run::{run, write_artifacts, Outcome, RunError};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Simulation or I/O failure, or an oracle mismatch.
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const CENSORED: i32 = 3;
}
