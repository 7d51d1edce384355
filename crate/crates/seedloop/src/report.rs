//! Evaluation records, text tables and cross-run comparison.

use std::path::{Path, PathBuf};

use seedloop_core::controller::RunContext;
use seedloop_core::evaluation::{
    compare_methods, estimate_precision, infer_positives_from_scores, ComparisonTable, MethodRow,
};
use seedloop_core::rng::{substream, StreamPurpose};
use seedloop_core::{LoopConfig, LoopError, Oracle, Pool, Scorer};
use thiserror::Error;

use crate::store::{read_json, EvaluationRecord, StoreError, EVALUATION_REPORT};

pub const ZERO_SHOT_METHOD: &str = "zero-shot";

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("{0} has no evaluation report; run `seedloop evaluate --run {0}` first")]
    MissingEvaluation(PathBuf),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("runs cover different categories: {0:?} and {1:?}")]
    MixedCategories(String, String),
    #[error(transparent)]
    Table(#[from] seedloop_core::evaluation::CompareError),
}

/// A one-row table for a single run.
pub fn single_table(record: &EvaluationRecord) -> String {
    ComparisonTable {
        category: record.category.clone(),
        rows: vec![MethodRow {
            method: record.method.clone(),
            oracle_id: record
                .outcome
                .report()
                .map_or_else(|| record.oracle_id.clone(), |r| r.oracle_id.clone()),
            estimated_precision: record.outcome.precision(),
            inferred_positive_count: record.outcome.inferred_positive_count(),
        }],
        differences: Vec::new(),
    }
    .to_string()
}

pub fn read_evaluation(dir: &Path) -> Result<EvaluationRecord, CompareError> {
    let path = dir.join(EVALUATION_REPORT);
    if !path.exists() {
        return Err(CompareError::MissingEvaluation(dir.to_path_buf()));
    }
    Ok(read_json(&path)?)
}

/// Rows in the order given.
pub fn compare_dirs(dirs: &[PathBuf]) -> Result<ComparisonTable, CompareError> {
    let records = dirs.iter().map(|d| read_evaluation(d)).collect::<Result<Vec<_>, _>>()?;
    let category = records.first().map(|r| r.category.clone()).unwrap_or_default();
    if let Some(other) = records.iter().find(|r| r.category != category) {
        return Err(CompareError::MixedCategories(category, other.category.clone()));
    }
    let named: Vec<_> = records
        .into_iter()
        .map(|r| (r.method, r.outcome, r.oracle_id))
        .collect();
    Ok(compare_methods(&category, &named)?)
}

/// Audits the zero-shot scorer's own positives with the same sampling the
/// loop uses for its final model.
pub fn evaluate_zero_shot<S, O>(
    pool: &Pool,
    scorer: &S,
    oracle: &mut O,
    config: &LoopConfig,
) -> Result<EvaluationRecord, LoopError>
where
    S: Scorer + ?Sized,
    O: Oracle + ?Sized,
{
    config.validate()?;
    let mut ctx = RunContext::new(pool, scorer, config);
    let inferred = infer_positives_from_scores(ctx.zero_shot()?, config.decision_threshold)?;
    let mut rng = substream(config.seed, StreamPurpose::Evaluation, 0);
    let outcome = estimate_precision(
        &inferred,
        pool,
        &config.category,
        oracle,
        config.n_eval,
        config.decision_threshold,
        config.seed,
        &mut rng,
    )?;
    Ok(EvaluationRecord {
        method: ZERO_SHOT_METHOD.into(),
        category: config.category.clone(),
        oracle_id: oracle.id().into(),
        outcome,
    })
}
