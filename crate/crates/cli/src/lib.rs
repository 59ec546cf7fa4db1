//! Experiment harness behind the `tcr` binary: configuration, data
//! preparation, single runs, sweeps and CSV output.

pub mod config;
pub mod experiment;
pub mod output;
pub mod sweep;
