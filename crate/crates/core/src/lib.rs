//! Allocation-only core of the seedloop active-learning engine.
//!
//! The crate turns an unlabeled pool of short texts into a binary classifier:
//! a zero-shot scorer seeds a class-balanced first batch ([`coldstart`]), the
//! loop controller ([`controller`]) retrains a hashed n-gram logistic model
//! ([`model`], [`train`]) and asks an oracle ([`oracle`]) about the points the
//! model is least sure of ([`strategies`]), and the final model is audited by
//! sampling its positive predictions ([`evaluation`]).
//!
//! Nothing here touches a filesystem, a socket or a clock. The `seedloop`
//! crate layers persistence, remote oracles, the HTTP service and the CLI on
//! top.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adam;
pub mod coldstart;
pub mod config;
pub mod controller;
pub mod evaluation;
pub mod features;
pub mod lexicon;
pub mod model;
pub mod oracle;
pub mod prompt;
pub mod rng;
pub mod scorer;
pub mod strategies;
pub mod synth;
pub mod train;
pub mod types;

pub use config::{ConfigError, LoopConfig, StrategyId, TrainerConfig};
pub use controller::{
    resume_loop, run_loop, should_stop, Controller, IterationRecord, LoopError, Phase, Progress, RunOutcome, RunState,
};
pub use evaluation::{EvaluationOutcome, EvaluationReport};
pub use model::ClassifierParams;
pub use oracle::{Oracle, OracleAnswer, OracleError, OracleRequest, Purpose};
pub use scorer::Scorer;
pub use types::{Annotation, Clock, DataPoint, FixedClock, Label, Pool, PoolError, Record, ScoredPoint, Timestamp};
