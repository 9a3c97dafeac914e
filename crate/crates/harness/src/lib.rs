//! Experiment runner, verification suites and benchmarks for
//! `submapg-core`.

pub mod bench;
pub mod config;
pub mod instances;
pub mod metrics;
pub mod run;
pub mod verify;
