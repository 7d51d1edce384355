//! Candidate selection after cold start.
//!
//! * [`select_uncertain`]: pool-based uncertainty sampling. Points are ranked
//!   by binary entropy, highest first. For two classes, entropy is strictly
//!   decreasing in the margin `|p - 0.5|`, so the ranking key is the margin,
//!   rounded to a 2^-40 grid so that decimal-symmetric scores such as 0.1 and
//!   0.9 (which are not exactly symmetric in binary floating point) tie. Ties
//!   go to the smaller id. Entropy is measured in nats; the base does not
//!   affect the ranking.
//! * [`select_random`]: uniform without replacement.
//! * [`select_confident_pair`]: the confidence-only baseline. Half the batch
//!   is drawn from the zero-shot scorer's top decile, half from its bottom
//!   decile.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng;
use thiserror::Error;

use crate::rng::sample_indices;
use crate::types::ScoredPoint;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("asked for {requested} candidates but only {remaining} unannotated points remain")]
    NotEnoughCandidates { requested: usize, remaining: usize },
    #[error("confident set holds {available} unannotated points, fewer than the {requested} requested")]
    ConfidentSetTooSmall { requested: usize, available: usize },
}

/// `H(p) = -p ln p - (1-p) ln(1-p)` in nats, with `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> Result<f64, StrategyError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(StrategyError::Probability(p));
    }
    let term = |x: f64| if x > 0.0 { -x * libm::log(x) } else { 0.0 };
    Ok(term(p) + term(1.0 - p))
}

const MARGIN_GRID: f64 = (1u64 << 40) as f64;

/// Uncertainty rank key: smaller means more uncertain.
pub fn margin_key(p: f64) -> u64 {
    libm::round(libm::fabs(p - 0.5) * MARGIN_GRID) as u64
}

/// Inputs shared by the loop strategies.
#[derive(Debug, Clone, Copy)]
pub struct SelectionRequest<'a> {
    /// Current model's probabilities over the pool.
    pub scored_pool: &'a [ScoredPoint],
    /// Already-annotated ids.
    pub excluded: &'a BTreeSet<String>,
    pub k: usize,
}

impl<'a> SelectionRequest<'a> {
    fn remaining(&self) -> Vec<&'a ScoredPoint> {
        self.scored_pool
            .iter()
            .filter(|s| !self.excluded.contains(&s.point_id))
            .collect()
    }

    fn check(&self, remaining: usize) -> Result<(), StrategyError> {
        if remaining < self.k {
            return Err(StrategyError::NotEnoughCandidates {
                requested: self.k,
                remaining,
            });
        }
        Ok(())
    }
}

/// The `k` unannotated points of highest entropy, most uncertain first.
pub fn select_uncertain(req: &SelectionRequest<'_>) -> Result<Vec<String>, StrategyError> {
    let mut remaining = req.remaining();
    req.check(remaining.len())?;
    if let Some(bad) = remaining.iter().find(|s| !(0.0..=1.0).contains(&s.p_positive)) {
        return Err(StrategyError::Probability(bad.p_positive));
    }
    let mut keyed: Vec<(u64, &str)> = remaining
        .drain(..)
        .map(|s| (margin_key(s.p_positive), s.point_id.as_str()))
        .collect();
    keyed.sort_unstable();
    Ok(keyed.into_iter().take(req.k).map(|(_, id)| id.into()).collect())
}

/// `k` unannotated ids uniformly without replacement.
///
/// Candidates are put in id order before sampling, so the result does not
/// depend on the order of `scored_pool`.
pub fn select_random<R: Rng + ?Sized>(req: &SelectionRequest<'_>, rng: &mut R) -> Result<Vec<String>, StrategyError> {
    let mut ids: Vec<&str> = req.remaining().into_iter().map(|s| s.point_id.as_str()).collect();
    req.check(ids.len())?;
    ids.sort_unstable();
    Ok(sample_indices(rng, ids.len(), req.k)
        .into_iter()
        .map(|i| ids[i].into())
        .collect())
}

/// Size of a decile of `n` points, rounded up.
pub fn decile_size(n: usize) -> usize {
    n.div_ceil(10)
}

fn by_score_desc(a: &&ScoredPoint, b: &&ScoredPoint) -> Ordering {
    b.p_positive
        .partial_cmp(&a.p_positive)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.point_id.cmp(&b.point_id))
}

fn by_score_asc(a: &&ScoredPoint, b: &&ScoredPoint) -> Ordering {
    a.p_positive
        .partial_cmp(&b.p_positive)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.point_id.cmp(&b.point_id))
}

fn sample_decile<R: Rng + ?Sized>(
    scored: &[ScoredPoint],
    excluded: &BTreeSet<String>,
    m: usize,
    rng: &mut R,
    order: fn(&&ScoredPoint, &&ScoredPoint) -> Ordering,
) -> Result<Vec<String>, StrategyError> {
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut ranked: Vec<&ScoredPoint> = scored.iter().collect();
    ranked.sort_by(order);
    let mut decile: Vec<&str> = ranked
        .into_iter()
        .take(decile_size(scored.len()))
        .filter(|s| !excluded.contains(&s.point_id))
        .map(|s| s.point_id.as_str())
        .collect();
    if decile.len() < m {
        return Err(StrategyError::ConfidentSetTooSmall {
            requested: m,
            available: decile.len(),
        });
    }
    decile.sort_unstable();
    Ok(sample_indices(rng, decile.len(), m)
        .into_iter()
        .map(|i| decile[i].into())
        .collect())
}

/// `m` ids sampled uniformly from the unannotated part of the zero-shot top
/// decile (highest `p_positive`, ties by id).
pub fn select_confident_positive<R: Rng + ?Sized>(
    scored_zero_shot: &[ScoredPoint],
    excluded: &BTreeSet<String>,
    m: usize,
    rng: &mut R,
) -> Result<Vec<String>, StrategyError> {
    sample_decile(scored_zero_shot, excluded, m, rng, by_score_desc)
}

/// Mirror image of [`select_confident_positive`] over the bottom decile.
pub fn select_confident_negative<R: Rng + ?Sized>(
    scored_zero_shot: &[ScoredPoint],
    excluded: &BTreeSet<String>,
    m: usize,
    rng: &mut R,
) -> Result<Vec<String>, StrategyError> {
    sample_decile(scored_zero_shot, excluded, m, rng, by_score_asc)
}

/// A batch of `k` for the confidence-only baseline: `k/2` confident
/// positives followed by `k/2` confident negatives.
pub fn select_confident_pair<R: Rng + ?Sized>(
    scored_zero_shot: &[ScoredPoint],
    excluded: &BTreeSet<String>,
    k: usize,
    rng: &mut R,
) -> Result<Vec<String>, StrategyError> {
    let mut out = select_confident_positive(scored_zero_shot, excluded, k / 2, rng)?;
    let mut excluded_more = excluded.clone();
    excluded_more.extend(out.iter().cloned());
    out.extend(select_confident_negative(
        scored_zero_shot,
        &excluded_more,
        k - k / 2,
        rng,
    )?);
    Ok(out)
}
