//! Run directories, oracles over HTTP, the annotation service and the
//! `seedloop` command-line tool, built on `seedloop-core`.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod remote;
pub mod report;
pub mod runner;
pub mod service;
pub mod store;

pub use config::{OracleSpec, RunConfig, ScorerSpec};
pub use runner::{RunError, Runner, SubmitError, SystemClock};
