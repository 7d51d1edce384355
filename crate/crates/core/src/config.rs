//! Run configuration.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("k must be even and at least 2 (got {0})")]
    OddOrSmallK(usize),
    #[error("n_eval must be at least 1")]
    ZeroEvaluationSample,
    #[error("decision threshold must lie strictly between 0 and 1 (got {0})")]
    Threshold(f64),
    #[error("feature_dim must be a power of two and at least 2 (got {0})")]
    FeatureDim(usize),
    #[error("ngram orders must be non-empty and positive")]
    NgramOrders,
    #[error("invalid trainer setting: {0}")]
    Trainer(&'static str),
    #[error("unknown strategy {0:?} (expected uncertainty, random or confident_zero_shot)")]
    UnknownStrategy(String),
}

/// Candidate-selection strategy used after cold start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyId {
    /// Highest predictive entropy under the current model.
    Uncertainty,
    /// Uniform over unannotated points.
    Random,
    /// Random picks among the zero-shot scorer's most confident predictions.
    ConfidentZeroShot,
}

impl StrategyId {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::Uncertainty => "uncertainty",
            StrategyId::Random => "random",
            StrategyId::ConfidentZeroShot => "confident_zero_shot",
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uncertainty" => Ok(StrategyId::Uncertainty),
            "random" => Ok(StrategyId::Random),
            "confident_zero_shot" => Ok(StrategyId::ConfidentZeroShot),
            other => Err(ConfigError::UnknownStrategy(other.to_string())),
        }
    }
}

/// Hyperparameters of the reference classifier and its optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub epsilon: f64,
    /// Continue from the previous model version instead of zero weights.
    pub warm_start: bool,
    pub feature_dim: usize,
    pub ngram_orders: Vec<usize>,
}

impl TrainerConfig {
    /// Learning rate for BERT-scale remote backends.
    pub const REMOTE_LEARNING_RATE: f64 = 1e-5;

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.feature_dim < 2 || !self.feature_dim.is_power_of_two() {
            return Err(ConfigError::FeatureDim(self.feature_dim));
        }
        if self.ngram_orders.is_empty() || self.ngram_orders.contains(&0) {
            return Err(ConfigError::NgramOrders);
        }
        if self.batch_size == 0 {
            return Err(ConfigError::Trainer("batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ConfigError::Trainer("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(ConfigError::Trainer("betas must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(ConfigError::Trainer("weight_decay must be non-negative"));
        }
        if self.epsilon.partial_cmp(&0.0) != Some(core::cmp::Ordering::Greater) {
            return Err(ConfigError::Trainer("epsilon must be positive"));
        }
        Ok(())
    }
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.01,
            epsilon: 1e-8,
            warm_start: false,
            feature_dim: 1 << 18,
            ngram_orders: vec![1, 2, 3],
        }
    }
}

/// Everything that determines a run, apart from the pool and the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    /// Category name the binary question is about.
    pub category: String,
    /// Batch size per round; even.
    pub k: usize,
    pub max_iterations: u32,
    /// Audit sample size.
    pub n_eval: usize,
    pub seed: u64,
    pub strategy: StrategyId,
    pub decision_threshold: f64,
    pub trainer: TrainerConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            category: String::from("coffee"),
            k: 16,
            max_iterations: 9,
            n_eval: 200,
            seed: 0,
            strategy: StrategyId::Uncertainty,
            decision_threshold: 0.5,
            trainer: TrainerConfig::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k < 2 || !self.k.is_multiple_of(2) {
            return Err(ConfigError::OddOrSmallK(self.k));
        }
        if self.n_eval == 0 {
            return Err(ConfigError::ZeroEvaluationSample);
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return Err(ConfigError::Threshold(self.decision_threshold));
        }
        self.trainer.validate()
    }

    /// Total training annotations of a completed run: `k * (max_iterations + 1)`.
    pub fn annotation_budget(&self) -> usize {
        self.k * (self.max_iterations as usize + 1)
    }
}
