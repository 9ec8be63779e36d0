//! Command implementations behind the `dftopk` binary.
//!
//! The binary is a thin shell over these modules so integration tests can
//! drive the same code paths directly:
//!
//! * [`config`] — the flat key=value run configuration every command reads.
//! * [`bench`] — wall-clock loss microbenchmarks and log-log slope fits.
//! * [`report`] — the gradient-check property suite with text/CSV reports.
//! * [`runs`] — streaming training runs and temperature sweeps.
//! * [`cli`] — argument parsing, dispatch and the exit-code policy.

pub mod bench;
pub mod cli;
pub mod config;
pub mod report;
pub mod runs;
