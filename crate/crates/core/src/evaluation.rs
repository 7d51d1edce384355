//! Precision audit of a trained model.
//!
//! There is no test set, so the final model labels the whole pool and an
//! oracle checks a uniform sample of the points it calls positive:
//!
//! `precision ~ (#true positives in sample) / (#sampled)`
//!
//! When fewer than `n` points are inferred positive the whole set is audited,
//! which gives the exact precision. An empty positive set is its own outcome:
//! precision is undefined there, not zero.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::SparseVector;
use crate::model::ClassifierParams;
use crate::oracle::{request_id, Oracle, OracleAnswer, OracleError, OracleRequest, Purpose};
use crate::rng::sample_indices;
use crate::types::{DataPoint, Pool, ScoredPoint};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvaluationError {
    #[error("decision threshold must lie strictly between 0 and 1 (got {0})")]
    Threshold(f64),
    #[error("audit sample size must be at least 1")]
    ZeroSample,
    #[error("inferred id {0:?} is not in the pool")]
    UnknownPoint(String),
    #[error("audit answers do not match the audit sample: {0}")]
    AnswerMismatch(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_sampled: usize,
    pub n_true_positive_in_sample: usize,
    pub estimated_precision: f64,
    pub inferred_positive_count: usize,
    pub decision_threshold: f64,
    pub seed: u64,
    pub oracle_id: String,
}

impl EvaluationReport {
    /// Whether the sample covered every inferred positive, making the
    /// estimate exact.
    pub fn is_exhaustive(&self) -> bool {
        self.n_sampled == self.inferred_positive_count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum EvaluationOutcome {
    Estimated(EvaluationReport),
    NoPositivesInferred { decision_threshold: f64, seed: u64 },
}

impl EvaluationOutcome {
    pub fn report(&self) -> Option<&EvaluationReport> {
        match self {
            EvaluationOutcome::Estimated(r) => Some(r),
            EvaluationOutcome::NoPositivesInferred { .. } => None,
        }
    }

    pub fn precision(&self) -> Option<f64> {
        self.report().map(|r| r.estimated_precision)
    }

    pub fn inferred_positive_count(&self) -> usize {
        self.report().map_or(0, |r| r.inferred_positive_count)
    }
}

fn check_threshold(threshold: f64) -> Result<(), EvaluationError> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(EvaluationError::Threshold(threshold))
    }
}

/// Ids of points with `p >= threshold`, in pool order. `features` must be
/// the pool's features in pool order.
pub fn infer_positives(
    params: &ClassifierParams,
    pool: &Pool,
    features: &[SparseVector],
    threshold: f64,
) -> Result<Vec<String>, EvaluationError> {
    check_threshold(threshold)?;
    Ok(pool
        .iter()
        .zip(features)
        .filter(|(_, x)| params.predict_features(x) >= threshold)
        .map(|(p, _)| p.id().to_string())
        .collect())
}

/// Same rule applied to precomputed scores, e.g. a zero-shot scorer's.
pub fn infer_positives_from_scores(scores: &[ScoredPoint], threshold: f64) -> Result<Vec<String>, EvaluationError> {
    check_threshold(threshold)?;
    Ok(scores
        .iter()
        .filter(|s| s.p_positive >= threshold)
        .map(|s| s.point_id.clone())
        .collect())
}

/// Uniform sample without replacement of `min(n, |inferred|)` ids, in draw
/// order.
pub fn plan_audit<R: Rng + ?Sized>(inferred: &[String], n: usize, rng: &mut R) -> Vec<String> {
    let m = n.min(inferred.len());
    sample_indices(rng, inferred.len(), m)
        .into_iter()
        .map(|i| inferred[i].clone())
        .collect()
}

/// Builds the report from the oracle's verdicts on an audit sample.
pub fn summarize_audit(
    sample_len: usize,
    answers: &[OracleAnswer],
    inferred_positive_count: usize,
    decision_threshold: f64,
    seed: u64,
) -> Result<EvaluationReport, EvaluationError> {
    if answers.len() != sample_len || sample_len == 0 {
        return Err(EvaluationError::AnswerMismatch(format!(
            "{} answers for {} sampled points",
            answers.len(),
            sample_len
        )));
    }
    let hits = answers.iter().filter(|a| a.label.is_positive()).count();
    Ok(EvaluationReport {
        n_sampled: sample_len,
        n_true_positive_in_sample: hits,
        estimated_precision: hits as f64 / sample_len as f64,
        inferred_positive_count,
        decision_threshold,
        seed,
        oracle_id: answers[0].oracle_id.clone(),
    })
}

/// Samples up to `n` inferred positives, asks the oracle about each and
/// reports the hit rate.
#[allow(clippy::too_many_arguments)]
pub fn estimate_precision<O: Oracle + ?Sized, R: Rng + ?Sized>(
    inferred: &[String],
    pool: &Pool,
    category: &str,
    oracle: &mut O,
    n: usize,
    decision_threshold: f64,
    seed: u64,
    rng: &mut R,
) -> Result<EvaluationOutcome, EvaluationError> {
    if n == 0 {
        return Err(EvaluationError::ZeroSample);
    }
    if inferred.is_empty() {
        return Ok(EvaluationOutcome::NoPositivesInferred {
            decision_threshold,
            seed,
        });
    }
    let sample = plan_audit(inferred, n, rng);
    let ids: Vec<String> = (0..sample.len())
        .map(|i| request_id(Purpose::Evaluation, 0, i))
        .collect();
    let mut requests = Vec::with_capacity(sample.len());
    for (rid, pid) in ids.iter().zip(&sample) {
        let point = pool
            .get(pid)
            .ok_or_else(|| EvaluationError::UnknownPoint(pid.clone()))?;
        requests.push(OracleRequest {
            request_id: rid,
            point,
            purpose: Purpose::Evaluation,
            category,
        });
    }
    let answers = oracle.annotate(&requests)?;
    summarize_audit(sample.len(), &answers, inferred.len(), decision_threshold, seed).map(EvaluationOutcome::Estimated)
}

/// Simulation ground truth of a point, for evaluation harnesses only.
pub fn ground_truth(point: &DataPoint) -> Option<bool> {
    point.hidden_label()
}

/// Exact precision of an inferred set against the hidden labels, or `None`
/// when the set is empty or some point lacks a hidden label.
pub fn exact_precision(pool: &Pool, inferred: &[String]) -> Option<f64> {
    if inferred.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    for id in inferred {
        if pool.get(id)?.hidden_label()? {
            hits += 1;
        }
    }
    Some(hits as f64 / inferred.len() as f64)
}

/// One row of a method comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub oracle_id: String,
    /// `None` when the method inferred no positives.
    pub estimated_precision: Option<f64>,
    pub inferred_positive_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionDifference {
    pub method: String,
    pub baseline: String,
    pub difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub category: String,
    pub rows: Vec<MethodRow>,
    /// For every pair of rows `i < j`: row `j` minus row `i`.
    pub differences: Vec<PrecisionDifference>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompareError {
    #[error("a comparison needs at least two reports (got {0})")]
    TooFewReports(usize),
}

/// Rows in the given order plus all pairwise precision differences.
pub fn compare_methods(
    category: &str,
    reports: &[(String, EvaluationOutcome, String)],
) -> Result<ComparisonTable, CompareError> {
    if reports.len() < 2 {
        return Err(CompareError::TooFewReports(reports.len()));
    }
    let rows: Vec<MethodRow> = reports
        .iter()
        .map(|(method, outcome, oracle_id)| MethodRow {
            method: method.clone(),
            oracle_id: outcome
                .report()
                .map_or_else(|| oracle_id.clone(), |r| r.oracle_id.clone()),
            estimated_precision: outcome.precision(),
            inferred_positive_count: outcome.inferred_positive_count(),
        })
        .collect();
    let mut differences = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            differences.push(PrecisionDifference {
                method: rows[j].method.clone(),
                baseline: rows[i].method.clone(),
                difference: match (rows[j].estimated_precision, rows[i].estimated_precision) {
                    (Some(a), Some(b)) => Some(a - b),
                    _ => None,
                },
            });
        }
    }
    Ok(ComparisonTable {
        category: category.to_string(),
        rows,
        differences,
    })
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let headers = ["Method", "Oracle", "Estimated Precision", "#Inferred-Positive"];
        let cells: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.method.clone(),
                    r.oracle_id.clone(),
                    r.estimated_precision
                        .map_or_else(|| "undefined".to_string(), |p| format!("{:.1}%", p * 100.0)),
                    r.inferred_positive_count.to_string(),
                ]
            })
            .collect();
        let mut widths = headers.map(|h| h.chars().count());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let rule: String = {
            let mut s = String::from("+");
            for w in widths {
                s.push_str(&"-".repeat(w + 2));
                s.push('+');
            }
            s
        };
        let line = |f: &mut fmt::Formatter<'_>, row: &[String]| -> fmt::Result {
            write!(f, "|")?;
            for (c, w) in row.iter().zip(widths) {
                write!(f, " {c:<w$} |")?;
            }
            writeln!(f)
        };
        writeln!(f, "Category: {}", self.category)?;
        writeln!(f, "{rule}")?;
        line(f, &headers.map(String::from))?;
        writeln!(f, "{rule}")?;
        for row in &cells {
            line(f, row)?;
        }
        writeln!(f, "{rule}")?;
        for d in &self.differences {
            match d.difference {
                Some(x) => writeln!(f, "{} - {}: {:+.1} pp", d.method, d.baseline, x * 100.0)?,
                None => writeln!(f, "{} - {}: undefined", d.method, d.baseline)?,
            }
        }
        Ok(())
    }
}

/// Ids that appear in both lists; used to check audit and training logs
/// stay disjoint.
pub fn overlap<'a>(a: impl IntoIterator<Item = &'a str>, b: impl IntoIterator<Item = &'a str>) -> BTreeSet<&'a str> {
    let a: BTreeSet<&str> = a.into_iter().collect();
    b.into_iter().filter(|x| a.contains(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ScriptedOracle;
    use crate::rng::new_rng;
    use crate::types::{Label, Record};
    use alloc::vec;

    fn report(precision_hits: usize, n: usize, inferred: usize) -> EvaluationOutcome {
        EvaluationOutcome::Estimated(EvaluationReport {
            n_sampled: n,
            n_true_positive_in_sample: precision_hits,
            estimated_precision: precision_hits as f64 / n as f64,
            inferred_positive_count: inferred,
            decision_threshold: 0.5,
            seed: 0,
            oracle_id: "human".into(),
        })
    }

    fn answers(hits: usize, n: usize) -> Vec<OracleAnswer> {
        (0..n)
            .map(|i| OracleAnswer {
                request_id: format!("r{i}"),
                label: Label(i < hits),
                oracle_id: "human".into(),
                latency: Default::default(),
            })
            .collect()
    }

    #[test]
    fn precision_is_hit_rate() {
        let r = summarize_audit(200, &answers(196, 200), 4249, 0.5, 1).unwrap();
        assert_eq!(r.n_true_positive_in_sample, 196);
        assert!((r.estimated_precision - 0.98).abs() < 1e-12);
        let all = summarize_audit(200, &answers(200, 200), 500, 0.5, 1).unwrap();
        assert_eq!(all.estimated_precision, 1.0);
        assert!(summarize_audit(200, &answers(10, 10), 500, 0.5, 1).is_err());
    }

    #[test]
    fn zero_model_infers_everything() {
        let pool = Pool::from_records((0..5).map(|i| Record {
            id: format!("p{i}"),
            text: format!("t{i}"),
            label: None,
        }))
        .unwrap();
        let params = ClassifierParams::zeros(64, &[1]);
        let feats = crate::features::featurize_pool(&pool, &[1], 64);
        assert_eq!(infer_positives(&params, &pool, &feats, 0.5).unwrap().len(), 5);
        assert_eq!(
            infer_positives(&params, &pool, &feats, 1.0),
            Err(EvaluationError::Threshold(1.0))
        );
        assert!(infer_positives(&params, &pool, &feats, 0.0).is_err());
    }

    #[test]
    fn empty_inferred_set_is_undefined_not_zero() {
        let pool = Pool::default();
        let out = estimate_precision(
            &[],
            &pool,
            "coffee",
            &mut ScriptedOracle::new(),
            200,
            0.5,
            3,
            &mut new_rng(3),
        )
        .unwrap();
        assert_eq!(
            out,
            EvaluationOutcome::NoPositivesInferred {
                decision_threshold: 0.5,
                seed: 3
            }
        );
        assert_eq!(out.precision(), None);
    }

    #[test]
    fn small_positive_set_is_audited_exhaustively() {
        let pool = Pool::from_records((0..10).map(|i| Record {
            id: format!("p{i}"),
            text: format!("t{i}"),
            label: Some(i < 7),
        }))
        .unwrap();
        let inferred: Vec<String> = pool.iter().map(|p| p.id().to_string()).collect();
        let out = estimate_precision(
            &inferred,
            &pool,
            "c",
            &mut ScriptedOracle::new(),
            200,
            0.5,
            0,
            &mut new_rng(0),
        )
        .unwrap();
        let r = out.report().unwrap();
        assert!(r.is_exhaustive());
        assert_eq!(r.estimated_precision, 0.7);
        assert_eq!(exact_precision(&pool, &inferred), Some(0.7));
    }

    #[test]
    fn audit_sample_has_no_duplicates() {
        let inferred: Vec<String> = (0..500).map(|i| format!("p{i}")).collect();
        let s = plan_audit(&inferred, 200, &mut new_rng(4));
        assert_eq!(s.len(), 200);
        assert_eq!(s.iter().collect::<BTreeSet<_>>().len(), 200);
    }

    #[test]
    fn comparison_differences() {
        let rows = vec![
            ("LLM + ZL".to_string(), report(36, 200, 60649), "human".to_string()),
            (
                "model + confident".to_string(),
                report(193, 200, 1102),
                "human".to_string(),
            ),
            (
                "model + uncertainty".to_string(),
                report(196, 200, 4249),
                "human".to_string(),
            ),
        ];
        let t = compare_methods("coffee", &rows).unwrap();
        let d = t
            .differences
            .iter()
            .find(|d| d.method == "model + uncertainty" && d.baseline == "model + confident")
            .unwrap();
        assert!((d.difference.unwrap() - 0.015).abs() < 1e-12);
        let text = t.to_string();
        assert!(text.contains("98.0%"));
        assert!(text.contains("#Inferred-Positive"));

        let tea = vec![
            ("RAND".to_string(), report(166, 200, 4253), "human".to_string()),
            ("uncertainty".to_string(), report(190, 200, 4320), "human".to_string()),
        ];
        let t = compare_methods("tea", &tea).unwrap();
        assert!((t.differences[0].difference.unwrap() - 0.12).abs() < 1e-12);
    }

    #[test]
    fn identical_reports_have_zero_difference() {
        let rows = vec![
            ("a".to_string(), report(150, 200, 10), "h".to_string()),
            ("a".to_string(), report(150, 200, 10), "h".to_string()),
        ];
        assert_eq!(
            compare_methods("c", &rows).unwrap().differences[0].difference,
            Some(0.0)
        );
        assert_eq!(compare_methods("c", &rows[..1]), Err(CompareError::TooFewReports(1)));
    }
}
