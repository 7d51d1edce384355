//! The active-learning controller.
//!
//! A run is a small state machine over [`RunState`]:
//!
//! ```text
//! initializing -> (awaiting_annotations -> training -> selecting)* -> evaluating -> done
//! ```
//!
//! * `initializing`: score the pool zero-shot and plan the balanced seed batch.
//! * `awaiting_annotations`: a batch of oracle requests is outstanding. The
//!   controller never calls an oracle itself; answers arrive through
//!   [`Controller::submit`], which commits the whole batch at once.
//! * `training`: retrain on every annotation so far (one new model version),
//!   then consult the stop rule.
//! * `selecting`: score the unannotated pool with the current model and pick
//!   the next batch with the configured strategy.
//! * `evaluating`: audit a sample of the final model's positive predictions.
//!
//! All randomness comes from substreams of `config.seed`, and nothing in the
//! state depends on wall-clock time except annotation timestamps, so a run
//! replays identically from any saved state given the same oracle answers.
//! Models are not stored: a model version is retrained from the annotation
//! history on demand, which is bit-identical to the original.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coldstart::{plan_from_scores, score_pool, ColdStartError};
use crate::config::{ConfigError, LoopConfig, StrategyId};
use crate::evaluation::{infer_positives, plan_audit, summarize_audit, EvaluationError, EvaluationOutcome};
use crate::features::{featurize_pool, SparseVector};
use crate::model::{ClassifierParams, Example};
use crate::oracle::{request_id, Oracle, OracleAnswer, OracleError, OracleRequest, Purpose};
use crate::rng::{substream, StreamPurpose};
use crate::scorer::Scorer;
use crate::strategies::{select_confident_pair, select_random, select_uncertain, SelectionRequest, StrategyError};
use crate::train::{train, TrainError};
use crate::types::{Annotation, Clock, Pool, ScoredPoint, Timestamp};

/// Version of the serialized [`RunState`] layout.
pub const STATE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initializing,
    AwaitingAnnotations,
    Training,
    Selecting,
    Evaluating,
    Done,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Initializing => "initializing",
            Phase::AwaitingAnnotations => "awaiting_annotations",
            Phase::Training => "training",
            Phase::Selecting => "selecting",
            Phase::Evaluating => "evaluating",
            Phase::Done => "done",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRequest {
    pub request_id: String,
    pub point_id: String,
}

/// Requests the controller is waiting on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingBatch {
    pub purpose: Purpose,
    pub iteration: u32,
    pub requests: Vec<PendingRequest>,
    /// Size of the inferred-positive set an audit batch was drawn from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inferred_positive_count: Option<usize>,
}

impl PendingBatch {
    pub fn position(&self, request_id: &str) -> Option<usize> {
        self.requests.iter().position(|r| r.request_id == request_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Loop iteration, starting at 1.
    pub iteration: u32,
    pub selected_ids: Vec<String>,
    pub annotations_added: usize,
    pub model_version: u32,
    pub train_loss_final: f64,
}

/// Full replayable state of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub format_version: u32,
    pub config: LoopConfig,
    /// Iteration of the latest batch (0 = cold start).
    pub iteration: u32,
    pub phase: Phase,
    /// Number of models trained so far.
    pub model_version: u32,
    /// Training annotations, in commit order.
    pub annotations: Vec<Annotation>,
    pub pending: Option<PendingBatch>,
    pub iterations: Vec<IterationRecord>,
    /// Audit verdicts, kept apart from training annotations.
    pub audit: Vec<Annotation>,
    pub evaluation: Option<EvaluationOutcome>,
}

impl RunState {
    pub fn new(config: LoopConfig) -> Self {
        RunState {
            format_version: STATE_FORMAT_VERSION,
            config,
            iteration: 0,
            phase: Phase::Initializing,
            model_version: 0,
            annotations: Vec::new(),
            pending: None,
            iterations: Vec::new(),
            audit: Vec::new(),
            evaluation: None,
        }
    }

    pub fn annotated_ids(&self) -> BTreeSet<String> {
        self.annotations.iter().map(|a| a.point_id.clone()).collect()
    }

    /// Every point id the state refers to.
    pub fn referenced_ids(&self) -> impl Iterator<Item = &str> {
        self.annotations
            .iter()
            .chain(&self.audit)
            .map(|a| a.point_id.as_str())
            .chain(
                self.pending
                    .iter()
                    .flat_map(|b| b.requests.iter().map(|r| r.point_id.as_str())),
            )
    }

    pub fn budget(&self) -> usize {
        self.config.annotation_budget()
    }
}

/// Decides when the loop stops; consulted right after each training step.
pub trait StopRule {
    fn should_stop(&self, state: &RunState) -> bool;
}

/// Stop once `max_iterations` loop iterations have been annotated.
#[derive(Debug, Clone, Copy, Default)]
pub struct IterationBudget;

impl StopRule for IterationBudget {
    fn should_stop(&self, state: &RunState) -> bool {
        should_stop(state)
    }
}

pub fn should_stop(state: &RunState) -> bool {
    state.iteration >= state.config.max_iterations
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoopError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("pool has {available} points but the run needs at least {required}")]
    PoolTooSmall { required: usize, available: usize },
    #[error("state references ids missing from the pool: {}", .0.join(", "))]
    MissingPoints(Vec<String>),
    #[error("unsupported state format version {0}")]
    FormatVersion(u32),
    #[error(transparent)]
    ColdStart(#[from] ColdStartError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("{0}; the labeled set needs both classes, try a larger k or a better zero-shot lexicon")]
    Train(#[from] TrainError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error("no answers are expected in phase {0}")]
    NotAwaiting(&'static str),
    #[error("answers do not match the outstanding batch: {0}")]
    AnswerMismatch(String),
    #[error("point {0:?} is already annotated")]
    DuplicateAnnotation(String),
}

/// What a call to [`Controller::advance`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    /// One internal transition happened.
    Advanced,
    /// Oracle answers for the pending batch are needed.
    NeedsAnswers,
    Done,
}

/// Pool plus derived per-point data the controller needs.
pub struct RunContext<'a, S: ?Sized> {
    pool: &'a Pool,
    scorer: &'a S,
    features: Vec<SparseVector>,
    zero_shot: Option<Vec<ScoredPoint>>,
}

impl<'a, S: Scorer + ?Sized> RunContext<'a, S> {
    pub fn new(pool: &'a Pool, scorer: &'a S, config: &LoopConfig) -> Self {
        RunContext {
            pool,
            scorer,
            features: featurize_pool(pool, &config.trainer.ngram_orders, config.trainer.feature_dim),
            zero_shot: None,
        }
    }

    pub fn pool(&self) -> &'a Pool {
        self.pool
    }

    pub fn features(&self) -> &[SparseVector] {
        &self.features
    }

    /// Zero-shot scores for the whole pool, computed once.
    pub fn zero_shot(&mut self) -> Result<&[ScoredPoint], ColdStartError> {
        if self.zero_shot.is_none() {
            self.zero_shot = Some(score_pool(self.pool, self.scorer)?);
        }
        Ok(self.zero_shot.as_deref().unwrap_or_default())
    }

    fn examples(&self, annotations: &[Annotation]) -> Result<Vec<Example>, LoopError> {
        annotations
            .iter()
            .map(|a| {
                let i = self
                    .pool
                    .position(&a.point_id)
                    .ok_or_else(|| LoopError::MissingPoints(alloc::vec![a.point_id.clone()]))?;
                Ok(Example {
                    features: self.features[i].clone(),
                    target: a.label.as_target(),
                })
            })
            .collect()
    }
}

/// Everything a finished run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub params: ClassifierParams,
    pub state: RunState,
}

impl RunOutcome {
    pub fn iterations(&self) -> &[IterationRecord] {
        &self.state.iterations
    }
}

pub struct Controller {
    state: RunState,
    model: Option<ClassifierParams>,
    stop_rule: alloc::boxed::Box<dyn StopRule + Send + Sync>,
}

impl core::fmt::Debug for Controller {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Controller")
            .field("state", &self.state)
            .field("model_cached", &self.model.is_some())
            .finish()
    }
}

impl Controller {
    pub fn new(config: LoopConfig) -> Result<Self, LoopError> {
        config.validate()?;
        Ok(Self::from_state_unchecked(RunState::new(config)))
    }

    /// Picks up a saved state. The model is rebuilt lazily when needed.
    pub fn from_state(state: RunState) -> Result<Self, LoopError> {
        if state.format_version != STATE_FORMAT_VERSION {
            return Err(LoopError::FormatVersion(state.format_version));
        }
        state.config.validate()?;
        Ok(Self::from_state_unchecked(state))
    }

    fn from_state_unchecked(state: RunState) -> Self {
        Controller {
            state,
            model: None,
            stop_rule: alloc::boxed::Box::new(IterationBudget),
        }
    }

    pub fn with_stop_rule(mut self, rule: impl StopRule + Send + Sync + 'static) -> Self {
        self.stop_rule = alloc::boxed::Box::new(rule);
        self
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn into_state(self) -> RunState {
        self.state
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn config(&self) -> &LoopConfig {
        &self.state.config
    }

    /// Every id the state mentions must exist in `pool`.
    pub fn check_pool(&self, pool: &Pool) -> Result<(), LoopError> {
        let mut missing: Vec<String> = self
            .state
            .referenced_ids()
            .filter(|id| !pool.contains(id))
            .map(String::from)
            .collect();
        missing.sort();
        missing.dedup();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(LoopError::MissingPoints(missing))
        }
    }

    /// Oracle requests for the pending batch, in batch order.
    pub fn pending_requests<'a>(&'a self, pool: &'a Pool) -> Result<Vec<OracleRequest<'a>>, LoopError> {
        let Some(batch) = &self.state.pending else {
            return Ok(Vec::new());
        };
        batch
            .requests
            .iter()
            .map(|r| {
                let point = pool
                    .get(&r.point_id)
                    .ok_or_else(|| LoopError::MissingPoints(alloc::vec![r.point_id.clone()]))?;
                Ok(OracleRequest {
                    request_id: &r.request_id,
                    point,
                    purpose: batch.purpose,
                    category: &self.state.config.category,
                })
            })
            .collect()
    }

    /// Performs one internal transition, if any is possible without oracle
    /// input.
    pub fn advance<S: Scorer + ?Sized>(&mut self, ctx: &mut RunContext<'_, S>) -> Result<Progress, LoopError> {
        match self.state.phase {
            Phase::Initializing => {
                self.initialize(ctx)?;
                Ok(Progress::Advanced)
            }
            Phase::AwaitingAnnotations => Ok(Progress::NeedsAnswers),
            Phase::Training => {
                self.train_step(ctx)?;
                Ok(Progress::Advanced)
            }
            Phase::Selecting => {
                self.select_step(ctx)?;
                Ok(Progress::Advanced)
            }
            Phase::Evaluating => {
                if self.state.pending.is_some() {
                    return Ok(Progress::NeedsAnswers);
                }
                self.plan_evaluation(ctx)?;
                Ok(Progress::Advanced)
            }
            Phase::Done => Ok(Progress::Done),
        }
    }

    fn initialize<S: Scorer + ?Sized>(&mut self, ctx: &mut RunContext<'_, S>) -> Result<(), LoopError> {
        let required = self.state.budget();
        if ctx.pool.len() < required {
            return Err(LoopError::PoolTooSmall {
                required,
                available: ctx.pool.len(),
            });
        }
        let k = self.state.config.k;
        let plan = plan_from_scores(ctx.zero_shot()?, k)?;
        let ids: Vec<String> = plan.candidates().map(String::from).collect();
        self.state.iteration = 0;
        self.state.pending = Some(batch(Purpose::Coldstart, 0, ids, None));
        self.state.phase = Phase::AwaitingAnnotations;
        Ok(())
    }

    fn train_version<S: Scorer + ?Sized>(
        &self,
        ctx: &RunContext<'_, S>,
        version: u32,
        previous: Option<ClassifierParams>,
    ) -> Result<(ClassifierParams, f64), LoopError> {
        let cfg = &self.state.config.trainer;
        // Version v sees the annotations of iterations 0..v.
        let labeled: Vec<Annotation> = self
            .state
            .annotations
            .iter()
            .filter(|a| a.iteration < version)
            .cloned()
            .collect();
        let examples = ctx.examples(&labeled)?;
        let init = match previous {
            Some(p) if cfg.warm_start => p,
            _ => ClassifierParams::fresh(cfg),
        };
        let mut rng = substream(self.state.config.seed, StreamPurpose::Training, u64::from(version));
        let trained = train(init, &examples, cfg, &mut rng)?;
        let loss = trained.final_loss(&examples);
        Ok((trained.params, loss))
    }

    /// The latest model version, retrained from the history if not cached.
    pub fn model<S: Scorer + ?Sized>(&mut self, ctx: &RunContext<'_, S>) -> Result<&ClassifierParams, LoopError> {
        if self.model.is_none() {
            let latest = self.state.model_version;
            let params = if latest == 0 {
                ClassifierParams::fresh(&self.state.config.trainer)
            } else if self.state.config.trainer.warm_start {
                let mut prev = None;
                for v in 1..=latest {
                    prev = Some(self.train_version(ctx, v, prev)?.0);
                }
                prev.expect("at least one version")
            } else {
                self.train_version(ctx, latest, None)?.0
            };
            self.model = Some(params);
        }
        Ok(self.model.as_ref().expect("model cached"))
    }

    fn train_step<S: Scorer + ?Sized>(&mut self, ctx: &mut RunContext<'_, S>) -> Result<(), LoopError> {
        let previous = if self.state.config.trainer.warm_start && self.state.model_version > 0 {
            Some(self.model(ctx)?.clone())
        } else {
            None
        };
        let version = self.state.model_version + 1;
        let (params, loss) = self.train_version(ctx, version, previous)?;
        self.model = Some(params);
        self.state.model_version = version;
        let iteration = self.state.iteration;
        if iteration >= 1 {
            let selected_ids: Vec<String> = self
                .state
                .annotations
                .iter()
                .filter(|a| a.iteration == iteration)
                .map(|a| a.point_id.clone())
                .collect();
            self.state.iterations.push(IterationRecord {
                iteration,
                annotations_added: selected_ids.len(),
                selected_ids,
                model_version: version,
                train_loss_final: loss,
            });
        }
        self.state.phase = if self.stop_rule.should_stop(&self.state) {
            Phase::Evaluating
        } else {
            Phase::Selecting
        };
        Ok(())
    }

    /// Model probabilities for every pool point, in pool order.
    pub fn score_with_model<S: Scorer + ?Sized>(
        &mut self,
        ctx: &RunContext<'_, S>,
    ) -> Result<Vec<ScoredPoint>, LoopError> {
        let model = self.model(ctx)?;
        Ok(ctx
            .pool
            .iter()
            .zip(&ctx.features)
            .map(|(p, x)| ScoredPoint {
                point_id: p.id().to_string(),
                p_positive: model.predict_features(x),
            })
            .collect())
    }

    fn select_step<S: Scorer + ?Sized>(&mut self, ctx: &mut RunContext<'_, S>) -> Result<(), LoopError> {
        let next = self.state.iteration + 1;
        let k = self.state.config.k;
        let excluded = self.state.annotated_ids();
        let mut rng = substream(self.state.config.seed, StreamPurpose::Selection, u64::from(next));
        let ids = match self.state.config.strategy {
            StrategyId::Uncertainty => {
                let scored = self.score_with_model(ctx)?;
                select_uncertain(&SelectionRequest {
                    scored_pool: &scored,
                    excluded: &excluded,
                    k,
                })?
            }
            StrategyId::Random => {
                let scored = self.score_with_model(ctx)?;
                select_random(
                    &SelectionRequest {
                        scored_pool: &scored,
                        excluded: &excluded,
                        k,
                    },
                    &mut rng,
                )?
            }
            StrategyId::ConfidentZeroShot => select_confident_pair(ctx.zero_shot()?, &excluded, k, &mut rng)?,
        };
        self.state.iteration = next;
        self.state.pending = Some(batch(Purpose::Loop, next, ids, None));
        self.state.phase = Phase::AwaitingAnnotations;
        Ok(())
    }

    fn plan_evaluation<S: Scorer + ?Sized>(&mut self, ctx: &mut RunContext<'_, S>) -> Result<(), LoopError> {
        let threshold = self.state.config.decision_threshold;
        let seed = self.state.config.seed;
        let inferred = {
            let model = self.model(ctx)?;
            infer_positives(model, ctx.pool, &ctx.features, threshold)?
        };
        if inferred.is_empty() {
            self.state.evaluation = Some(EvaluationOutcome::NoPositivesInferred {
                decision_threshold: threshold,
                seed,
            });
            self.state.phase = Phase::Done;
            return Ok(());
        }
        let mut rng = substream(seed, StreamPurpose::Evaluation, 0);
        let sample = plan_audit(&inferred, self.state.config.n_eval, &mut rng);
        self.state.pending = Some(batch(
            Purpose::Evaluation,
            self.state.iteration,
            sample,
            Some(inferred.len()),
        ));
        Ok(())
    }

    /// Commits answers for the whole pending batch.
    ///
    /// Answers may arrive in any order but must cover every outstanding
    /// request exactly once; they are committed in batch order. Nothing is
    /// committed if validation fails.
    pub fn submit(&mut self, answers: &[(OracleAnswer, Timestamp)]) -> Result<(), LoopError> {
        let awaiting = matches!(self.state.phase, Phase::AwaitingAnnotations | Phase::Evaluating);
        let Some(batch) = self.state.pending.as_ref().filter(|_| awaiting) else {
            return Err(LoopError::NotAwaiting(self.state.phase.as_str()));
        };
        if answers.len() != batch.requests.len() {
            return Err(LoopError::AnswerMismatch(format!(
                "{} answers for {} requests",
                answers.len(),
                batch.requests.len()
            )));
        }
        let mut slots: Vec<Option<&(OracleAnswer, Timestamp)>> = alloc::vec![None; batch.requests.len()];
        for entry in answers {
            let pos = batch
                .position(&entry.0.request_id)
                .ok_or_else(|| LoopError::AnswerMismatch(format!("unknown request {:?}", entry.0.request_id)))?;
            if slots[pos].replace(entry).is_some() {
                return Err(LoopError::AnswerMismatch(format!(
                    "request {:?} answered twice",
                    entry.0.request_id
                )));
            }
        }
        let committed: Vec<Annotation> = batch
            .requests
            .iter()
            .zip(slots)
            .map(|(req, slot)| {
                let (answer, at) = slot.expect("every slot filled");
                Annotation {
                    point_id: req.point_id.clone(),
                    label: answer.label,
                    oracle_id: answer.oracle_id.clone(),
                    iteration: batch.iteration,
                    created_at: *at,
                }
            })
            .collect();

        if batch.purpose.is_training() {
            let known = self.state.annotated_ids();
            if let Some(dup) = committed.iter().find(|a| known.contains(&a.point_id)) {
                return Err(LoopError::DuplicateAnnotation(dup.point_id.clone()));
            }
            self.state.annotations.extend(committed);
            self.state.pending = None;
            self.state.phase = Phase::Training;
        } else {
            let inferred = batch.inferred_positive_count.unwrap_or(committed.len());
            let ordered: Vec<OracleAnswer> = committed
                .iter()
                .zip(&batch.requests)
                .map(|(a, r)| OracleAnswer {
                    request_id: r.request_id.clone(),
                    label: a.label,
                    oracle_id: a.oracle_id.clone(),
                    latency: Default::default(),
                })
                .collect();
            let report = summarize_audit(
                committed.len(),
                &ordered,
                inferred,
                self.state.config.decision_threshold,
                self.state.config.seed,
            )?;
            self.state.audit.extend(committed);
            self.state.evaluation = Some(EvaluationOutcome::Estimated(report));
            self.state.pending = None;
            self.state.phase = Phase::Done;
        }
        Ok(())
    }

    /// Drives the run to `done`, asking `answer` for every batch.
    ///
    /// On error the controller keeps its last consistent state: a failed
    /// oracle call leaves the batch pending, so the run can be resumed.
    pub fn run_with<S, F, C>(&mut self, ctx: &mut RunContext<'_, S>, clock: C, mut answer: F) -> Result<(), LoopError>
    where
        S: Scorer + ?Sized,
        F: FnMut(Purpose, &[OracleRequest<'_>]) -> Result<Vec<OracleAnswer>, OracleError>,
        C: Clock,
    {
        self.check_pool(ctx.pool)?;
        loop {
            match self.advance(ctx)? {
                Progress::Advanced => {}
                Progress::Done => return Ok(()),
                Progress::NeedsAnswers => {
                    let answers = {
                        let requests = self.pending_requests(ctx.pool)?;
                        let purpose = requests.first().map_or(Purpose::Loop, |r| r.purpose);
                        answer(purpose, &requests)?
                    };
                    let stamped: Vec<(OracleAnswer, Timestamp)> =
                        answers.into_iter().map(|a| (a, clock.now())).collect();
                    self.submit(&stamped)?;
                }
            }
        }
    }

    pub fn run<S, O, C>(&mut self, ctx: &mut RunContext<'_, S>, oracle: &mut O, clock: C) -> Result<(), LoopError>
    where
        S: Scorer + ?Sized,
        O: Oracle + ?Sized,
        C: Clock,
    {
        self.run_with(ctx, clock, |_, reqs| oracle.annotate(reqs))
    }

    /// Final model and state of a finished run.
    pub fn finish<S: Scorer + ?Sized>(mut self, ctx: &RunContext<'_, S>) -> Result<RunOutcome, LoopError> {
        let params = self.model(ctx)?.clone();
        Ok(RunOutcome {
            params,
            state: self.state,
        })
    }
}

fn batch(purpose: Purpose, iteration: u32, point_ids: Vec<String>, inferred: Option<usize>) -> PendingBatch {
    PendingBatch {
        purpose,
        iteration,
        requests: point_ids
            .into_iter()
            .enumerate()
            .map(|(i, point_id)| PendingRequest {
                request_id: request_id(purpose, iteration, i),
                point_id,
            })
            .collect(),
        inferred_positive_count: inferred,
    }
}

/// Runs cold start, the loop and the final audit with one oracle.
pub fn run_loop<S, O, C>(
    pool: &Pool,
    scorer: &S,
    oracle: &mut O,
    config: LoopConfig,
    clock: C,
) -> Result<RunOutcome, LoopError>
where
    S: Scorer + ?Sized,
    O: Oracle + ?Sized,
    C: Clock,
{
    let mut controller = Controller::new(config)?;
    let mut ctx = RunContext::new(pool, scorer, controller.config());
    controller.run(&mut ctx, oracle, clock)?;
    controller.finish(&ctx)
}

/// Continues a saved run. Completed iterations are never redone; a `done`
/// state returns its stored results straight away.
pub fn resume_loop<S, O, C>(
    state: RunState,
    pool: &Pool,
    scorer: &S,
    oracle: &mut O,
    clock: C,
) -> Result<RunOutcome, LoopError>
where
    S: Scorer + ?Sized,
    O: Oracle + ?Sized,
    C: Clock,
{
    let mut controller = Controller::from_state(state)?;
    controller.check_pool(pool)?;
    let mut ctx = RunContext::new(pool, scorer, controller.config());
    controller.run(&mut ctx, oracle, clock)?;
    controller.finish(&ctx)
}
