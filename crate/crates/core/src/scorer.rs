//! Zero-shot scoring contract.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("scorer {scorer} failed: {message}")]
pub struct ScorerError {
    pub scorer: String,
    pub message: String,
}

/// Anything that maps a text to a positive-class probability without
/// task-specific training.
///
/// Scorers only ever see text, never a point's ground truth.
pub trait Scorer {
    fn id(&self) -> &str;

    fn score(&self, text: &str) -> Result<f64, ScorerError>;

    /// Scores many texts; implementations backed by a remote service override
    /// this to batch or parallelize.
    fn score_batch(&self, texts: &[&str]) -> Result<Vec<f64>, ScorerError> {
        texts.iter().map(|t| self.score(t)).collect()
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn score(&self, text: &str) -> Result<f64, ScorerError> {
        (**self).score(text)
    }

    fn score_batch(&self, texts: &[&str]) -> Result<Vec<f64>, ScorerError> {
        (**self).score_batch(texts)
    }
}
