//! Lexicon zero-shot scorer.
//!
//! `p = sigmoid((sum of positive weights present - sum of negative weights present) / temperature)`.
//! A term counts once when it occurs anywhere in the text (substring match,
//! case-sensitive), however many times it repeats.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::sigmoid;
use crate::scorer::{Scorer, ScorerError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LexiconError {
    #[error("lexicon needs at least one positive term")]
    NoPositiveTerm,
    #[error("temperature must be positive and finite (got {0})")]
    Temperature(f64),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub term: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotLexicon {
    positive: Vec<WeightedTerm>,
    negative: Vec<WeightedTerm>,
    temperature: f64,
}

impl ZeroShotLexicon {
    pub fn new(
        positive: Vec<WeightedTerm>,
        negative: Vec<WeightedTerm>,
        temperature: f64,
    ) -> Result<Self, LexiconError> {
        if positive.is_empty() {
            return Err(LexiconError::NoPositiveTerm);
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(LexiconError::Temperature(temperature));
        }
        Ok(ZeroShotLexicon {
            positive,
            negative,
            temperature,
        })
    }

    /// Parses `term<TAB>weight<TAB>polarity` lines, polarity `+` or `-`.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(source: &str, temperature: f64) -> Result<Self, LexiconError> {
        let mut positive = Vec::new();
        let mut negative = Vec::new();
        for (n, raw) in source.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| LexiconError::Parse {
                line: n + 1,
                reason: reason.to_string(),
            };
            let mut fields = line.split('\t');
            let (Some(term), Some(weight), Some(polarity), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(err("expected three tab-separated fields"));
            };
            if term.is_empty() {
                return Err(err("empty term"));
            }
            let weight: f64 = weight.trim().parse().map_err(|_| err("weight is not a number"))?;
            if !weight.is_finite() {
                return Err(err("weight is not finite"));
            }
            let entry = WeightedTerm {
                term: term.to_string(),
                weight,
            };
            match polarity.trim() {
                "+" => positive.push(entry),
                "-" => negative.push(entry),
                _ => return Err(err("polarity must be + or -")),
            }
        }
        Self::new(positive, negative, temperature)
    }

    /// Serializes back to the tab-separated line format.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for (terms, sign) in [(&self.positive, '+'), (&self.negative, '-')] {
            for t in terms {
                out.push_str(&alloc::format!("{}\t{}\t{}\n", t.term, t.weight, sign));
            }
        }
        out
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn positive_terms(&self) -> &[WeightedTerm] {
        &self.positive
    }

    pub fn negative_terms(&self) -> &[WeightedTerm] {
        &self.negative
    }

    pub fn raw_score(&self, text: &str) -> f64 {
        let sum = |terms: &[WeightedTerm]| -> f64 {
            terms
                .iter()
                .filter(|t| text.contains(t.term.as_str()))
                .map(|t| t.weight)
                .sum()
        };
        sum(&self.positive) - sum(&self.negative)
    }
}

pub fn zero_shot_score(lexicon: &ZeroShotLexicon, text: &str) -> f64 {
    sigmoid(lexicon.raw_score(text) / lexicon.temperature)
}

impl Scorer for ZeroShotLexicon {
    fn id(&self) -> &str {
        "lexicon"
    }

    fn score(&self, text: &str) -> Result<f64, ScorerError> {
        Ok(zero_shot_score(self, text))
    }
}
