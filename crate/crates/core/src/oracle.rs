//! Oracle contract plus the two simulation oracles.
//!
//! An oracle is the annotation authority: whatever it answers is recorded as
//! ground truth. It is asked in three roles, distinguished by [`Purpose`]:
//! labeling the cold-start seed, labeling loop candidates, and auditing the
//! final model's positive predictions.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{substream, unit, StreamPurpose};
use crate::types::{DataPoint, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Coldstart,
    Loop,
    Evaluation,
}

impl Purpose {
    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::Coldstart => "coldstart",
            Purpose::Loop => "loop",
            Purpose::Evaluation => "evaluation",
        }
    }

    pub fn is_training(self) -> bool {
        !matches!(self, Purpose::Evaluation)
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Request ids are `"<purpose>-<iteration>-<index>"`, unique within a run.
pub fn request_id(purpose: Purpose, iteration: u32, index: usize) -> String {
    format!("{}-{}-{}", purpose.as_str(), iteration, index)
}

#[derive(Debug, Clone, Copy)]
pub struct OracleRequest<'a> {
    pub request_id: &'a str,
    pub point: &'a DataPoint,
    pub purpose: Purpose,
    pub category: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleAnswer {
    pub request_id: String,
    pub label: Label,
    pub oracle_id: String,
    #[serde(default)]
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("point {0:?} carries no hidden label")]
    MissingHiddenLabel(String),
    #[error("flip probability must lie in [0, 0.5] (got {0})")]
    FlipProbability(f64),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("unparseable oracle response: {payload}")]
    Protocol { payload: String },
    #[error("oracle unavailable: {0}")]
    Unavailable(String),
}

pub trait Oracle {
    fn id(&self) -> &str;

    /// Answers every request, in request order, or fails as a whole.
    fn annotate(&mut self, requests: &[OracleRequest<'_>]) -> Result<Vec<OracleAnswer>, OracleError>;
}

impl<O: Oracle + ?Sized> Oracle for &mut O {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn annotate(&mut self, requests: &[OracleRequest<'_>]) -> Result<Vec<OracleAnswer>, OracleError> {
        (**self).annotate(requests)
    }
}

impl<O: Oracle + ?Sized> Oracle for alloc::boxed::Box<O> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn annotate(&mut self, requests: &[OracleRequest<'_>]) -> Result<Vec<OracleAnswer>, OracleError> {
        (**self).annotate(requests)
    }
}

/// Answers with the simulation ground truth.
#[derive(Debug, Clone)]
pub struct ScriptedOracle {
    id: String,
}

impl ScriptedOracle {
    pub fn new() -> Self {
        Self::with_id("scripted")
    }

    pub fn with_id(id: impl Into<String>) -> Self {
        ScriptedOracle { id: id.into() }
    }

    pub fn answer(&self, req: &OracleRequest<'_>) -> Result<OracleAnswer, OracleError> {
        scripted_annotate(req, &self.id)
    }
}

impl Default for ScriptedOracle {
    fn default() -> Self {
        Self::new()
    }
}

pub fn scripted_annotate(req: &OracleRequest<'_>, oracle_id: &str) -> Result<OracleAnswer, OracleError> {
    let truth = req
        .point
        .hidden_label()
        .ok_or_else(|| OracleError::MissingHiddenLabel(req.point.id().to_string()))?;
    Ok(OracleAnswer {
        request_id: req.request_id.to_string(),
        label: Label(truth),
        oracle_id: oracle_id.to_string(),
        latency: Duration::ZERO,
    })
}

impl Oracle for ScriptedOracle {
    fn id(&self) -> &str {
        &self.id
    }

    fn annotate(&mut self, requests: &[OracleRequest<'_>]) -> Result<Vec<OracleAnswer>, OracleError> {
        requests.iter().map(|r| self.answer(r)).collect()
    }
}

/// Ground truth with independent label flips.
///
/// Each request draws from its own substream keyed by the request id, so an
/// answer does not depend on which other requests were asked before it, and a
/// resumed run sees the same flips as an uninterrupted one.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    id: String,
    flip_probability: f64,
    seed: u64,
}

impl NoisyOracle {
    pub fn new(flip_probability: f64, seed: u64) -> Result<Self, OracleError> {
        if !(0.0..=0.5).contains(&flip_probability) {
            return Err(OracleError::FlipProbability(flip_probability));
        }
        Ok(NoisyOracle {
            id: format!("noisy:{flip_probability}"),
            flip_probability,
            seed,
        })
    }

    pub fn flip_probability(&self) -> f64 {
        self.flip_probability
    }

    pub fn answer(&self, req: &OracleRequest<'_>) -> Result<OracleAnswer, OracleError> {
        noisy_annotate(req, self.flip_probability, self.seed, &self.id)
    }
}

pub fn noisy_annotate(
    req: &OracleRequest<'_>,
    flip_probability: f64,
    seed: u64,
    oracle_id: &str,
) -> Result<OracleAnswer, OracleError> {
    if !(0.0..=0.5).contains(&flip_probability) {
        return Err(OracleError::FlipProbability(flip_probability));
    }
    let mut answer = scripted_annotate(req, oracle_id)?;
    let mut rng = substream(
        seed,
        StreamPurpose::OracleNoise,
        crate::features::hash_ngram(req.request_id),
    );
    if unit(&mut rng) < flip_probability {
        answer.label = Label(!answer.label.0);
    }
    Ok(answer)
}

impl Oracle for NoisyOracle {
    fn id(&self) -> &str {
        &self.id
    }

    fn annotate(&mut self, requests: &[OracleRequest<'_>]) -> Result<Vec<OracleAnswer>, OracleError> {
        requests.iter().map(|r| self.answer(r)).collect()
    }
}
