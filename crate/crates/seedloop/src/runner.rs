//! A controller bound to a run directory.
//!
//! Every transition is persisted before the next one starts: committed
//! answers go to their log first, then the snapshot is replaced. A runner
//! that hit a storage error refuses further work; reopen the directory to
//! continue from what is on disk.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use seedloop_core::controller::{Controller, PendingBatch, Phase, Progress, RunContext, RunState};
use seedloop_core::{Annotation, Clock, Label, LoopError, Oracle, OracleAnswer, Pool, Purpose, Scorer, Timestamp};
use serde::Serialize;
use thiserror::Error;

use crate::config::{RunConfig, SpecError};
use crate::report::single_table;
use crate::store::{
    batch_tag, read_json, AnnotationLogRecord, EvaluationRecord, FaultPlan, LogKind, PendingAnswer, RunStore,
    StoreError, CONFIG_FILE,
};

pub type DynScorer = dyn Scorer + Send + Sync;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("an earlier storage error left this runner unusable; reopen the run directory")]
    Poisoned,
    #[error("{path}: log and snapshot disagree: {message}")]
    Inconsistent { path: String, message: String },
}

/// Why a human answer was refused.
#[derive(Debug, Error)]
pub enum SubmitError {
    #[error("no batch is awaiting answers (phase {0})")]
    WrongPhase(&'static str),
    #[error("request {0:?} is not outstanding")]
    UnknownRequest(String),
    #[error("request {0:?} was already answered")]
    AlreadyAnswered(String),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Wall-clock milliseconds.
#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        let ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        Timestamp(ms)
    }
}

/// An outstanding request as shown to annotators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Candidate {
    pub request_id: String,
    pub point_id: String,
    pub text: String,
    pub category: String,
    pub purpose: Purpose,
    /// Position in the batch, from 0.
    pub position: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SubmitAck {
    /// Requests of the batch still unanswered.
    pub remaining: usize,
    /// True when this answer completed the batch.
    pub committed: bool,
}

pub fn read_config(dir: &Path) -> Result<RunConfig, StoreError> {
    read_json(&dir.join(CONFIG_FILE))
}

pub struct Runner<'a> {
    config: RunConfig,
    controller: Controller,
    ctx: RunContext<'a, DynScorer>,
    store: RunStore,
    /// Human answers accepted for the current batch, by request id.
    answers: BTreeMap<String, PendingAnswer>,
    pending_tag: Option<String>,
    reported_iterations: usize,
    poisoned: bool,
}

impl<'a> Runner<'a> {
    pub fn create(dir: &Path, config: RunConfig, pool: &'a Pool, scorer: &'a DynScorer) -> Result<Self, RunError> {
        config.validate()?;
        let controller = Controller::new(config.loop_config.clone())?;
        controller.check_pool(pool)?;
        let required = controller.state().budget();
        if pool.len() < required {
            return Err(LoopError::PoolTooSmall {
                required,
                available: pool.len(),
            }
            .into());
        }
        let store = RunStore::create(dir, &config, controller.state())?;
        let ctx = RunContext::new(pool, scorer, controller.config());
        Ok(Runner {
            config,
            controller,
            ctx,
            store,
            answers: BTreeMap::new(),
            pending_tag: None,
            reported_iterations: 0,
            poisoned: false,
        })
    }

    /// Reopens a run, replaying a trailing committed batch and dropping any
    /// half-written one.
    pub fn open(dir: &Path, pool: &'a Pool, scorer: &'a DynScorer) -> Result<Self, RunError> {
        let (store, rec) = RunStore::open(dir)?;
        let controller = Controller::from_state(rec.state)?;
        controller.check_pool(pool)?;
        let ctx = RunContext::new(pool, scorer, controller.config());
        let mut runner = Runner {
            config: rec.config,
            controller,
            ctx,
            store,
            answers: BTreeMap::new(),
            pending_tag: None,
            // A crash may have come between the snapshot and the report.
            reported_iterations: usize::MAX,
            poisoned: false,
        };
        runner.reconcile(LogKind::Training, &rec.training_log)?;
        runner.reconcile(LogKind::Evaluation, &rec.evaluation_log)?;
        if let Some(batch) = runner.controller.state().pending.clone() {
            let tag = batch_tag(batch.purpose, batch.iteration);
            if let Some((_, answers)) = rec.pending.filter(|(t, _)| *t == tag) {
                for a in answers {
                    if batch.position(&a.request_id).is_some() {
                        runner.answers.entry(a.request_id.clone()).or_insert(a);
                    }
                }
                runner.pending_tag = Some(tag);
            }
        }
        runner.persist_state()?;
        let complete = runner
            .pending_batch()
            .is_some_and(|b| runner.answers.len() == b.requests.len());
        if complete {
            runner.commit_human()?;
        }
        Ok(runner)
    }

    fn reconcile(&mut self, kind: LogKind, log: &[AnnotationLogRecord]) -> Result<(), RunError> {
        let state = self.controller.state();
        let committed = match kind {
            LogKind::Training => &state.annotations,
            LogKind::Evaluation => &state.audit,
        };
        let inconsistent = |message: String| RunError::Inconsistent {
            path: kind.file_name().into(),
            message,
        };
        if log.len() < committed.len() {
            return Err(inconsistent(format!(
                "{} records but the snapshot holds {}",
                log.len(),
                committed.len()
            )));
        }
        if let Some((i, _)) = log
            .iter()
            .zip(committed)
            .enumerate()
            .find(|(_, (r, a))| r.annotation != **a)
        {
            return Err(inconsistent(format!("record {} differs from the snapshot", i + 1)));
        }
        let suffix = &log[committed.len()..];
        if suffix.is_empty() {
            return Ok(());
        }
        let batch = state
            .pending
            .as_ref()
            .filter(|b| LogKind::of(b.purpose) == kind)
            .ok_or_else(|| {
                inconsistent(format!(
                    "{} records past the snapshot with no batch outstanding",
                    suffix.len()
                ))
            })?;
        let matches_batch = suffix
            .iter()
            .zip(&batch.requests)
            .all(|(r, q)| r.request_id == q.request_id && r.annotation.point_id == q.point_id);
        if !matches_batch {
            return Err(inconsistent(
                "records past the snapshot do not match the outstanding batch".into(),
            ));
        }
        if suffix.len() < batch.requests.len() {
            // Torn batch: never acknowledged.
            let keep = committed.len();
            return Ok(self.store.truncate_log(kind, keep)?);
        }
        let answers: Vec<(OracleAnswer, Timestamp)> = suffix
            .iter()
            .map(|r| {
                (
                    OracleAnswer {
                        request_id: r.request_id.clone(),
                        label: r.annotation.label,
                        oracle_id: r.annotation.oracle_id.clone(),
                        latency: Default::default(),
                    },
                    r.annotation.created_at,
                )
            })
            .collect();
        self.controller.submit(&answers)?;
        Ok(())
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn state(&self) -> &RunState {
        self.controller.state()
    }

    pub fn phase(&self) -> Phase {
        self.controller.phase()
    }

    pub fn dir(&self) -> &Path {
        self.store.dir()
    }

    pub fn pool(&self) -> &'a Pool {
        self.ctx.pool()
    }

    pub fn set_faults(&mut self, faults: FaultPlan) {
        self.store.set_faults(faults);
    }

    fn persist(&mut self, f: impl FnOnce(&mut Self) -> Result<(), StoreError>) -> Result<(), RunError> {
        if self.poisoned {
            return Err(RunError::Poisoned);
        }
        f(self).map_err(|e| {
            self.poisoned = true;
            RunError::from(e)
        })
    }

    /// Snapshot plus whatever derived files changed.
    fn persist_state(&mut self) -> Result<(), RunError> {
        self.persist(|s| s.store.write_snapshot(s.controller.state()))?;
        let n = self.state().iterations.len();
        if n != self.reported_iterations {
            self.persist(|s| s.store.write_iterations(&s.controller.state().iterations))?;
            self.reported_iterations = n;
        }
        if let Some(batch) = &self.controller.state().pending {
            let tag = batch_tag(batch.purpose, batch.iteration);
            if self.pending_tag.as_deref() != Some(tag.as_str()) {
                self.answers.clear();
                self.persist(|s| s.store.reset_pending(&tag, &[]))?;
                self.pending_tag = Some(tag);
            }
        }
        if self.phase() == Phase::Done {
            if let Some(record) = self.evaluation_record() {
                let table = single_table(&record);
                self.persist(|s| s.store.write_evaluation(&record, &table))?;
            }
        }
        Ok(())
    }

    /// One internal transition, persisted.
    pub fn step(&mut self) -> Result<Progress, RunError> {
        if self.poisoned {
            return Err(RunError::Poisoned);
        }
        let progress = self.controller.advance(&mut self.ctx)?;
        if progress == Progress::Advanced {
            self.persist_state()?;
        }
        Ok(progress)
    }

    pub fn pending_batch(&self) -> Option<&PendingBatch> {
        self.controller.state().pending.as_ref()
    }

    /// Commits a full batch of answers: log, then state, then snapshot.
    pub fn commit(&mut self, answers: &[(OracleAnswer, Timestamp)]) -> Result<(), RunError> {
        if self.poisoned {
            return Err(RunError::Poisoned);
        }
        let batch = self
            .pending_batch()
            .cloned()
            .ok_or(LoopError::NotAwaiting(self.phase().as_str()))?;
        let kind = LogKind::of(batch.purpose);
        let before = self.committed(kind).len();
        self.controller.submit(answers)?;
        let start = self.store.log_len(kind);
        debug_assert_eq!(start as usize, before);
        let records: Vec<AnnotationLogRecord> = self.committed(kind)[before..]
            .iter()
            .zip(&batch.requests)
            .enumerate()
            .map(|(i, (a, q))| AnnotationLogRecord {
                sequence_no: start + 1 + i as u64,
                purpose: batch.purpose,
                request_id: q.request_id.clone(),
                annotation: a.clone(),
            })
            .collect();
        self.persist(|s| s.store.append_batch(kind, &records))?;
        self.answers.clear();
        self.persist_state()
    }

    fn committed(&self, kind: LogKind) -> &[Annotation] {
        match kind {
            LogKind::Training => &self.state().annotations,
            LogKind::Evaluation => &self.state().audit,
        }
    }

    /// Asks `oracle` for the outstanding batch and commits the answers.
    pub fn answer_with<O, C>(&mut self, oracle: &mut O, clock: &C) -> Result<(), RunError>
    where
        O: Oracle + ?Sized,
        C: Clock + ?Sized,
    {
        let answers = {
            let requests = self.controller.pending_requests(self.ctx.pool())?;
            oracle.annotate(&requests).map_err(LoopError::from)?
        };
        let stamped: Vec<_> = answers.into_iter().map(|a| (a, clock.now())).collect();
        self.commit(&stamped)
    }

    /// Runs until a batch needs an oracle that is `None` here, or the run is
    /// done. Training batches go to `training`, the audit to `audit`.
    pub fn drive<C: Clock + ?Sized>(
        &mut self,
        mut training: Option<&mut (dyn Oracle + Send)>,
        mut audit: Option<&mut (dyn Oracle + Send)>,
        clock: &C,
        mut on_progress: impl FnMut(&Self),
    ) -> Result<Progress, RunError> {
        loop {
            match self.step()? {
                Progress::Advanced => on_progress(self),
                Progress::Done => return Ok(Progress::Done),
                Progress::NeedsAnswers => {
                    let purpose = self.pending_batch().map_or(Purpose::Loop, |b| b.purpose);
                    let answered = if purpose.is_training() {
                        training.as_deref_mut().map(|o| self.answer_with(o, clock))
                    } else {
                        audit.as_deref_mut().map(|o| self.answer_with(o, clock))
                    };
                    match answered {
                        Some(result) => {
                            result?;
                            on_progress(self);
                        }
                        None => return Ok(Progress::NeedsAnswers),
                    }
                }
            }
        }
    }

    /// Outstanding requests without an accepted answer, in batch order.
    pub fn candidates(&self) -> Vec<Candidate> {
        let Some(batch) = self.pending_batch() else {
            return Vec::new();
        };
        batch
            .requests
            .iter()
            .enumerate()
            .filter(|(_, r)| !self.answers.contains_key(&r.request_id))
            .filter_map(|(position, r)| {
                let point = self.ctx.pool().get(&r.point_id)?;
                Some(Candidate {
                    request_id: r.request_id.clone(),
                    point_id: r.point_id.clone(),
                    text: point.text().into(),
                    category: self.config.loop_config.category.clone(),
                    purpose: batch.purpose,
                    position,
                })
            })
            .collect()
    }

    /// Accepts one human answer. The answer is durable when this returns
    /// `Ok`; the answer completing the batch also commits it.
    pub fn submit_human(
        &mut self,
        request_id: &str,
        label: Label,
        oracle_id: &str,
        clock: &dyn Clock,
    ) -> Result<SubmitAck, SubmitError> {
        if self.poisoned {
            return Err(RunError::Poisoned.into());
        }
        let Some(batch) = self.pending_batch() else {
            if self.was_committed(request_id) {
                return Err(SubmitError::AlreadyAnswered(request_id.into()));
            }
            return Err(SubmitError::WrongPhase(self.phase().as_str()));
        };
        if batch.position(request_id).is_none() {
            if self.was_committed(request_id) {
                return Err(SubmitError::AlreadyAnswered(request_id.into()));
            }
            return Err(SubmitError::UnknownRequest(request_id.into()));
        }
        if self.answers.contains_key(request_id) {
            return Err(SubmitError::AlreadyAnswered(request_id.into()));
        }
        let total = batch.requests.len();
        let answer = PendingAnswer {
            request_id: request_id.into(),
            label,
            oracle_id: oracle_id.into(),
            created_at: clock.now(),
        };
        self.persist(|s| s.store.append_pending(&answer))?;
        self.answers.insert(request_id.into(), answer);
        let remaining = total - self.answers.len();
        if remaining == 0 {
            self.commit_human()?;
        }
        Ok(SubmitAck {
            remaining,
            committed: remaining == 0,
        })
    }

    fn commit_human(&mut self) -> Result<(), RunError> {
        let answers: Vec<(OracleAnswer, Timestamp)> = self
            .answers
            .values()
            .map(|a| {
                (
                    OracleAnswer {
                        request_id: a.request_id.clone(),
                        label: a.label,
                        oracle_id: a.oracle_id.clone(),
                        latency: Default::default(),
                    },
                    a.created_at,
                )
            })
            .collect();
        self.commit(&answers)
    }

    /// Whether `request_id` belongs to an already committed batch. Request
    /// ids are `<purpose>-<iteration>-<index>`, so this follows from the
    /// committed annotation counts.
    fn was_committed(&self, request_id: &str) -> bool {
        let mut parts = request_id.rsplitn(3, '-');
        let (Some(index), Some(iteration), Some(purpose)) = (parts.next(), parts.next(), parts.next()) else {
            return false;
        };
        let (Ok(index), Ok(iteration)) = (index.parse::<usize>(), iteration.parse::<u32>()) else {
            return false;
        };
        let state = self.state();
        let in_batch = |anns: &[Annotation]| anns.iter().filter(|a| a.iteration == iteration).count() > index;
        match purpose {
            "coldstart" => iteration == 0 && in_batch(&state.annotations),
            "loop" => iteration > 0 && in_batch(&state.annotations),
            "evaluation" => index < state.audit.len() && state.audit.first().is_some_and(|a| a.iteration == iteration),
            _ => false,
        }
    }

    pub fn evaluation_record(&self) -> Option<EvaluationRecord> {
        let outcome = self.state().evaluation.clone()?;
        let oracle_id = outcome
            .report()
            .map_or_else(|| self.config.audit_oracle().to_string(), |r| r.oracle_id.clone());
        Some(EvaluationRecord {
            method: self.config.method_name(),
            category: self.config.loop_config.category.clone(),
            oracle_id,
            outcome,
        })
    }

    /// Final classifier of the run.
    pub fn model(&mut self) -> Result<&seedloop_core::ClassifierParams, RunError> {
        Ok(self.controller.model(&self.ctx)?)
    }
}
