//! Cold start: a class-balanced seed batch from the zero-shot scorer's most
//! confident predictions.
//!
//! The plan takes the `k/2` highest-scoring points as predicted positives and
//! the `k/2` lowest-scoring remaining points as predicted negatives. There is
//! no confidence cutoff, only rank. Balance holds for the *predicted* classes;
//! the oracle is free to disagree, so the labeled seed may still come out
//! unbalanced.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{request_id, Oracle, OracleError, OracleRequest, Purpose};
use crate::scorer::{Scorer, ScorerError};
use crate::types::{Annotation, Clock, Pool, ScoredPoint};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ColdStartError {
    #[error("k must be even and at least 2 (got {0})")]
    OddK(usize),
    #[error("pool has {available} points but cold start needs at least {required}")]
    PoolTooSmall { required: usize, available: usize },
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error("scorer returned {p} for point {point_id:?}, outside [0, 1]")]
    OutOfRange { point_id: String, p: f64 },
    #[error("plan references point {0:?} which is not in the pool")]
    UnknownPoint(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("oracle answered {got} of {expected} requests")]
    IncompleteAnswers { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColdStartPlan {
    /// Highest `p_positive` first.
    pub positive_candidates: Vec<String>,
    /// Lowest `p_positive` first.
    pub negative_candidates: Vec<String>,
    pub scores_used: Vec<ScoredPoint>,
}

impl ColdStartPlan {
    /// Positives then negatives: the order requests are issued in.
    pub fn candidates(&self) -> impl Iterator<Item = &str> {
        self.positive_candidates
            .iter()
            .chain(&self.negative_candidates)
            .map(String::as_str)
    }

    pub fn k(&self) -> usize {
        self.positive_candidates.len() + self.negative_candidates.len()
    }
}

/// Scores the whole pool in pool order, checking every probability.
pub fn score_pool<S: Scorer + ?Sized>(pool: &Pool, scorer: &S) -> Result<Vec<ScoredPoint>, ColdStartError> {
    let texts: Vec<&str> = pool.iter().map(|p| p.text()).collect();
    let scores = scorer.score_batch(&texts)?;
    pool.iter()
        .zip(scores)
        .map(|(point, p)| {
            if (0.0..=1.0).contains(&p) {
                Ok(ScoredPoint {
                    point_id: point.id().into(),
                    p_positive: p,
                })
            } else {
                Err(ColdStartError::OutOfRange {
                    point_id: point.id().into(),
                    p,
                })
            }
        })
        .collect()
}

/// Builds the plan from precomputed scores. Ties are broken by ascending id
/// on both sides.
pub fn plan_from_scores(scores: &[ScoredPoint], k: usize) -> Result<ColdStartPlan, ColdStartError> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(ColdStartError::OddK(k));
    }
    if scores.len() < k {
        return Err(ColdStartError::PoolTooSmall {
            required: k,
            available: scores.len(),
        });
    }
    let half = k / 2;
    let mut ranked: Vec<&ScoredPoint> = scores.iter().collect();

    ranked.sort_by(|a, b| {
        b.p_positive
            .partial_cmp(&a.p_positive)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.point_id.cmp(&b.point_id))
    });
    let positive_candidates: Vec<String> = ranked[..half].iter().map(|s| s.point_id.clone()).collect();
    let taken: BTreeSet<&str> = positive_candidates.iter().map(String::as_str).collect();

    ranked.sort_by(|a, b| {
        a.p_positive
            .partial_cmp(&b.p_positive)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.point_id.cmp(&b.point_id))
    });
    let negative_candidates: Vec<String> = ranked
        .iter()
        .filter(|s| !taken.contains(s.point_id.as_str()))
        .take(half)
        .map(|s| s.point_id.clone())
        .collect();

    Ok(ColdStartPlan {
        positive_candidates,
        negative_candidates,
        scores_used: scores.to_vec(),
    })
}

/// Scores the pool with the zero-shot scorer and plans the seed batch.
pub fn plan_coldstart<S: Scorer + ?Sized>(pool: &Pool, scorer: &S, k: usize) -> Result<ColdStartPlan, ColdStartError> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(ColdStartError::OddK(k));
    }
    if pool.len() < k {
        return Err(ColdStartError::PoolTooSmall {
            required: k,
            available: pool.len(),
        });
    }
    plan_from_scores(&score_pool(pool, scorer)?, k)
}

/// Asks the oracle about every planned candidate and returns the iteration-0
/// annotations. On any failure nothing is returned and the whole cold start
/// can be retried.
pub fn execute_coldstart<O: Oracle + ?Sized, C: Clock>(
    plan: &ColdStartPlan,
    pool: &Pool,
    category: &str,
    oracle: &mut O,
    clock: C,
) -> Result<Vec<Annotation>, ColdStartError> {
    let ids: Vec<String> = (0..plan.k()).map(|i| request_id(Purpose::Coldstart, 0, i)).collect();
    let mut requests = Vec::with_capacity(plan.k());
    for (rid, pid) in ids.iter().zip(plan.candidates()) {
        let point = pool.get(pid).ok_or_else(|| ColdStartError::UnknownPoint(pid.into()))?;
        requests.push(OracleRequest {
            request_id: rid,
            point,
            purpose: Purpose::Coldstart,
            category,
        });
    }
    let answers = oracle.annotate(&requests)?;
    if answers.len() != requests.len() {
        return Err(ColdStartError::IncompleteAnswers {
            expected: requests.len(),
            got: answers.len(),
        });
    }
    Ok(requests
        .iter()
        .zip(answers)
        .map(|(req, ans)| Annotation {
            point_id: req.point.id().into(),
            label: ans.label,
            oracle_id: ans.oracle_id,
            iteration: 0,
            created_at: clock.now(),
        })
        .collect())
}
