//! HTTP API over one run at a time.
//!
//! A single writer thread owns the active [`Runner`]. Handlers send it
//! commands over a channel and read the latest published [`View`], so reads
//! never wait on training or oracle calls.
//!
//! | Method | Path                   | Body / result                                      |
//! |--------|------------------------|----------------------------------------------------|
//! | GET    | `/status`              | [`Status`]                                         |
//! | GET    | `/candidates`          | `{"phase", "candidates": [Candidate]}`             |
//! | POST   | `/annotations`         | `{"request_id", "label", "oracle_id"?}`            |
//! | POST   | `/runs`                | run config plus optional `run_id`; 201 on success  |
//! | POST   | `/runs/{id}/resume`    | reopens `<root>/<id>`                              |
//! | GET    | `/evaluation`          | evaluation record, or 404 `not_yet_estimated`      |
//! | GET    | `/iterations`          | `[IterationRecord]`                                |
//!
//! Errors are `{"error": <code>, "message": ..., "request_id"?: ...}`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc};
use std::thread;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use seedloop_core::controller::{IterationRecord, Progress};
use seedloop_core::{Clock, Label, Oracle, Pool};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{oneshot, watch};

use crate::config::RunConfig;
use crate::dataset::load_pool;
use crate::remote::scalar_label;
use crate::runner::{read_config, Candidate, DynScorer, RunError, Runner, SubmitAck, SubmitError, SystemClock};
use crate::store::{EvaluationRecord, SNAPSHOT_FILE};

/// Environment variable holding the listen address.
pub const LISTEN_ENV: &str = "SEEDLOOP_LISTEN";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8750";

#[derive(Clone)]
pub struct ServiceOptions {
    /// Run directories live at `<root>/<run_id>`.
    pub root: PathBuf,
    pub clock: Arc<dyn Clock + Send + Sync>,
}

impl ServiceOptions {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ServiceOptions {
            root: root.into(),
            clock: Arc::new(SystemClock),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub run_id: Option<String>,
    pub phase: String,
    pub iteration: u32,
    pub max_iterations: u32,
    pub model_version: u32,
    pub annotations_used: usize,
    pub budget: usize,
    /// Requests of the outstanding batch waiting for a human answer.
    pub awaiting_human: usize,
    /// Last failure of the active run, if it is stuck.
    pub error: Option<String>,
}

impl Default for Status {
    fn default() -> Self {
        Status {
            run_id: None,
            phase: "initializing".into(),
            iteration: 0,
            max_iterations: 0,
            model_version: 0,
            annotations_used: 0,
            budget: 0,
            awaiting_human: 0,
            error: None,
        }
    }
}

/// Everything the read endpoints serve.
#[derive(Debug, Clone, Default)]
pub struct View {
    pub status: Status,
    pub candidates: Vec<Candidate>,
    pub iterations: Vec<IterationRecord>,
    pub evaluation: Option<EvaluationRecord>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    request_id: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            request_id: None,
        }
    }

    fn with_request(mut self, id: &str) -> Self {
        self.request_id = Some(id.into());
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.code, "message": self.message});
        if let Some(id) = self.request_id {
            body["request_id"] = Value::String(id);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> Self {
        let msg = e.to_string();
        match e {
            SubmitError::UnknownRequest(id) => {
                ApiError::new(StatusCode::CONFLICT, "unknown_request", msg).with_request(&id)
            }
            SubmitError::AlreadyAnswered(id) => {
                ApiError::new(StatusCode::CONFLICT, "already_answered", msg).with_request(&id)
            }
            SubmitError::WrongPhase(_) => ApiError::new(StatusCode::CONFLICT, "wrong_phase", msg),
            SubmitError::Run(e) => run_error(e),
        }
    }
}

fn run_error(e: RunError) -> ApiError {
    let msg = e.to_string();
    match e {
        RunError::Loop(seedloop_core::LoopError::Config(_)) | RunError::Spec(_) => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", msg)
        }
        RunError::Loop(seedloop_core::LoopError::Oracle(_)) => {
            ApiError::new(StatusCode::BAD_GATEWAY, "oracle_failed", msg)
        }
        _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", msg),
    }
}

type Reply<T> = oneshot::Sender<Result<T, ApiError>>;

enum Command {
    Start {
        run_id: String,
        config: Box<RunConfig>,
        reply: Reply<String>,
    },
    Resume {
        run_id: String,
        reply: Reply<String>,
    },
    Submit {
        request_id: String,
        label: Label,
        oracle_id: String,
        reply: Reply<SubmitAck>,
    },
}

#[derive(Clone)]
struct AppState {
    commands: mpsc::Sender<Command>,
    view: watch::Receiver<Arc<View>>,
}

impl AppState {
    async fn call<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<T, ApiError> {
        let (tx, rx) = oneshot::channel();
        self.commands
            .send(make(tx))
            .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "shutting_down", "writer stopped"))?;
        rx.await.map_err(|_| {
            ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "internal",
                "writer dropped the request",
            )
        })?
    }

    fn view(&self) -> Arc<View> {
        self.view.borrow().clone()
    }
}

/// Builds the router and starts the writer thread. The thread exits once
/// the router and every clone of it are dropped.
pub fn router(options: ServiceOptions) -> (Router, thread::JoinHandle<()>) {
    let (tx, rx) = mpsc::channel();
    let (view_tx, view_rx) = watch::channel(Arc::new(View::default()));
    let writer = thread::Builder::new()
        .name("seedloop-writer".into())
        .spawn(move || writer_loop(options, rx, view_tx))
        .expect("spawn writer thread");
    let state = AppState {
        commands: tx,
        view: view_rx,
    };
    let app = Router::new()
        .route("/status", get(status))
        .route("/candidates", get(candidates))
        .route("/annotations", post(annotations))
        .route("/runs", post(start_run))
        .route("/runs/{id}/resume", post(resume_run))
        .route("/evaluation", get(evaluation))
        .route("/iterations", get(iterations))
        .with_state(state);
    (app, writer)
}

/// Serves until `shutdown` resolves, then waits for the writer to finish
/// its current command.
pub async fn serve(
    listener: tokio::net::TcpListener,
    options: ServiceOptions,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let (app, writer) = router(options);
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    tokio::task::spawn_blocking(move || writer.join()).await.ok();
    Ok(())
}

/// A service on its own runtime thread; stops when dropped.
pub struct RunningService {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<std::io::Result<()>>>,
}

impl RunningService {
    pub fn start(options: ServiceOptions, addr: &str) -> std::io::Result<Self> {
        let std_listener = std::net::TcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (stop, stopped) = oneshot::channel::<()>();
        let thread = thread::Builder::new().name("seedloop-http".into()).spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener)?;
                serve(listener, options, async {
                    let _ = stopped.await;
                })
                .await
            })
        })?;
        Ok(RunningService {
            addr,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(std::io::Error::other("service thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for RunningService {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

async fn status(State(s): State<AppState>) -> Json<Status> {
    Json(s.view().status.clone())
}

async fn candidates(State(s): State<AppState>) -> Json<Value> {
    let v = s.view();
    Json(json!({"phase": v.status.phase, "candidates": v.candidates}))
}

async fn iterations(State(s): State<AppState>) -> Json<Vec<IterationRecord>> {
    Json(s.view().iterations.clone())
}

async fn evaluation(State(s): State<AppState>) -> Result<Json<EvaluationRecord>, ApiError> {
    s.view().evaluation.clone().map(Json).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not_yet_estimated",
            "precision not yet estimated",
        )
    })
}

fn malformed(reason: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "malformed", reason)
}

fn json_body(body: Result<Json<Value>, JsonRejection>) -> Result<Value, ApiError> {
    body.map(|Json(v)| v).map_err(|rej| ApiError {
        status: if rej.status() == StatusCode::UNSUPPORTED_MEDIA_TYPE {
            rej.status()
        } else {
            StatusCode::BAD_REQUEST
        },
        code: "malformed",
        message: rej.body_text(),
        request_id: None,
    })
}

async fn annotations(
    State(s): State<AppState>,
    body: Result<Json<Value>, JsonRejection>,
) -> Result<Json<SubmitAck>, ApiError> {
    let body = json_body(body)?;
    let request_id = body
        .get("request_id")
        .and_then(Value::as_str)
        .filter(|id| !id.is_empty())
        .ok_or_else(|| malformed("request_id must be a non-empty string"))?
        .to_string();
    let label = body
        .get("label")
        .and_then(scalar_label)
        .ok_or_else(|| malformed("label must be 0, 1, true, false, \"yes\" or \"no\"").with_request(&request_id))?;
    let oracle_id = match body.get("oracle_id") {
        None | Some(Value::Null) => "human".to_string(),
        Some(Value::String(id)) if !id.is_empty() => id.clone(),
        Some(_) => return Err(malformed("oracle_id must be a non-empty string").with_request(&request_id)),
    };
    let ack = s
        .call(|reply| Command::Submit {
            request_id,
            label: Label(label),
            oracle_id,
            reply,
        })
        .await?;
    Ok(Json(ack))
}

#[derive(Deserialize)]
struct StartRun {
    #[serde(default)]
    run_id: Option<String>,
    #[serde(flatten)]
    config: RunConfig,
}

fn valid_run_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
}

async fn start_run(State(s): State<AppState>, body: Result<Json<Value>, JsonRejection>) -> Result<Response, ApiError> {
    let body = json_body(body)?;
    let req: StartRun = serde_json::from_value(body)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", e.to_string()))?;
    let run_id = req.run_id.unwrap_or_else(|| {
        let c = &req.config.loop_config;
        format!("{}-{}-seed{}", c.category, c.strategy, c.seed)
    });
    if !valid_run_id(&run_id) {
        return Err(malformed(format!("invalid run_id {run_id:?}")));
    }
    let config = req.config;
    let id = s
        .call(|reply| Command::Start {
            run_id,
            config: Box::new(config),
            reply,
        })
        .await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({"run_id": id, "status": s.view().status})),
    )
        .into_response())
}

async fn resume_run(State(s): State<AppState>, UrlPath(run_id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    if !valid_run_id(&run_id) {
        return Err(malformed(format!("invalid run_id {run_id:?}")));
    }
    let id = s.call(|reply| Command::Resume { run_id, reply }).await?;
    Ok(Json(json!({"run_id": id, "status": s.view().status})))
}

/// Everything a session borrows from.
struct Loaded {
    run_id: String,
    dir: PathBuf,
    config: RunConfig,
    pool: Pool,
    scorer: Box<DynScorer>,
    training: Option<Box<dyn Oracle + Send>>,
    audit: Option<Box<dyn Oracle + Send>>,
}

fn load(root: &Path, run_id: String, config: Option<RunConfig>) -> Result<Loaded, ApiError> {
    let dir = root.join(&run_id);
    let config = match config {
        Some(c) => {
            if dir.join(SNAPSHOT_FILE).exists() {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "run_exists",
                    format!("run {run_id:?} already exists; resume it instead"),
                ));
            }
            c.validate().map_err(|e| run_error(e.into()))?;
            c
        }
        None => {
            if !dir.join(SNAPSHOT_FILE).exists() {
                return Err(ApiError::new(
                    StatusCode::NOT_FOUND,
                    "unknown_run",
                    format!("no run {run_id:?}"),
                ));
            }
            read_config(&dir).map_err(|e| run_error(e.into()))?
        }
    };
    let pool = load_pool(&config.dataset)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "dataset", e.to_string()))?;
    let scorer = config.build_scorer().map_err(|e| run_error(e.into()))?;
    let c = &config.loop_config;
    let build = |spec: &crate::config::OracleSpec| -> Result<Option<Box<dyn Oracle + Send>>, ApiError> {
        if spec.is_human() {
            Ok(None)
        } else {
            spec.build(c.seed, &c.category, &config.remote)
                .map(Some)
                .map_err(|e| run_error(e.into()))
        }
    };
    let training = build(&config.oracle)?;
    let audit = build(config.audit_oracle())?;
    Ok(Loaded {
        run_id,
        dir,
        config,
        pool,
        scorer,
        training,
        audit,
    })
}

fn dyn_mut(o: &mut Option<Box<dyn Oracle + Send>>) -> Option<&mut (dyn Oracle + Send + '_)> {
    match o {
        Some(b) => Some(&mut **b),
        None => None,
    }
}

fn make_view(run_id: &str, runner: &Runner<'_>, error: Option<String>) -> View {
    let state = runner.state();
    let config = runner.config();
    let needs_human = runner.pending_batch().is_some_and(|b| {
        if b.purpose.is_training() {
            config.oracle.is_human()
        } else {
            config.audit_oracle().is_human()
        }
    });
    let candidates = if needs_human { runner.candidates() } else { Vec::new() };
    View {
        status: Status {
            run_id: Some(run_id.into()),
            phase: runner.phase().as_str().into(),
            iteration: state.iteration,
            max_iterations: state.config.max_iterations,
            model_version: state.model_version,
            annotations_used: state.annotations.len(),
            budget: state.budget(),
            awaiting_human: candidates.len(),
            error,
        },
        candidates,
        iterations: state.iterations.clone(),
        evaluation: runner.evaluation_record(),
    }
}

fn writer_loop(options: ServiceOptions, rx: mpsc::Receiver<Command>, view: watch::Sender<Arc<View>>) {
    let mut next = None;
    loop {
        let cmd = match next.take() {
            Some(c) => c,
            None => match rx.recv() {
                Ok(c) => c,
                Err(_) => return,
            },
        };
        let (run_id, config, reply) = match cmd {
            Command::Submit { reply, .. } => {
                let _ = reply.send(Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "wrong_phase",
                    "no run is active",
                )));
                continue;
            }
            Command::Start { run_id, config, reply } => (run_id, Some(*config), reply),
            Command::Resume { run_id, reply } => (run_id, None, reply),
        };
        let fresh = config.is_some();
        match load(&options.root, run_id, config) {
            Ok(loaded) => match session(&options, loaded, fresh, reply, &rx, &view) {
                Some(c) => next = Some(c),
                None => return,
            },
            Err(e) => {
                let _ = reply.send(Err(e));
            }
        }
    }
}

/// Serves one run until a command for another run arrives (returned) or
/// the channel closes (`None`).
fn session(
    options: &ServiceOptions,
    mut loaded: Loaded,
    fresh: bool,
    reply: Reply<String>,
    rx: &mpsc::Receiver<Command>,
    view: &watch::Sender<Arc<View>>,
) -> Option<Command> {
    let clock = options.clock.clone();
    let opened = if fresh {
        Runner::create(&loaded.dir, loaded.config.clone(), &loaded.pool, &*loaded.scorer)
    } else {
        Runner::open(&loaded.dir, &loaded.pool, &*loaded.scorer)
    };
    let mut runner = match opened {
        Ok(r) => r,
        Err(e) => {
            let _ = reply.send(Err(run_error(e)));
            return rx.recv().ok();
        }
    };
    let run_id = loaded.run_id.clone();
    tracing::info!(run = %run_id, dir = %loaded.dir.display(), "run {}", if fresh { "started" } else { "resumed" });
    view.send_replace(Arc::new(make_view(&run_id, &runner, None)));
    let _ = reply.send(Ok(run_id.clone()));

    let mut drive = |runner: &mut Runner<'_>| -> Option<String> {
        let result = runner.drive(
            dyn_mut(&mut loaded.training),
            dyn_mut(&mut loaded.audit),
            &*clock,
            |r| {
                view.send_replace(Arc::new(make_view(&run_id, r, None)));
            },
        );
        match result {
            Ok(Progress::Done) => {
                tracing::info!(run = %run_id, "run done");
                None
            }
            Ok(_) => None,
            Err(e) => {
                tracing::error!(run = %run_id, "run stopped: {e}");
                Some(e.to_string())
            }
        }
    };
    let mut error = drive(&mut runner);
    view.send_replace(Arc::new(make_view(&run_id, &runner, error.clone())));

    loop {
        let cmd = rx.recv().ok()?;
        match cmd {
            Command::Submit {
                request_id,
                label,
                oracle_id,
                reply,
            } => {
                let result = runner.submit_human(&request_id, label, &oracle_id, &*clock);
                let committed = matches!(result, Ok(SubmitAck { committed: true, .. }));
                if let Err(SubmitError::Run(e)) = &result {
                    error = Some(e.to_string());
                }
                // Publish before replying so a client never reads a view
                // older than its own answer.
                view.send_replace(Arc::new(make_view(&run_id, &runner, error.clone())));
                let _ = reply.send(result.map_err(ApiError::from));
                if committed {
                    error = drive(&mut runner);
                    view.send_replace(Arc::new(make_view(&run_id, &runner, error.clone())));
                }
            }
            Command::Resume { run_id: ref id, .. } | Command::Start { run_id: ref id, .. }
                if *id == run_id && error.is_some() =>
            {
                // Reopen from disk to retry the failed step.
                return Some(cmd);
            }
            Command::Resume { run_id: ref id, .. } if *id == run_id => {
                if let Command::Resume { reply, .. } = cmd {
                    let _ = reply.send(Ok(run_id.clone()));
                }
            }
            Command::Start { run_id: ref id, .. } if *id == run_id => {
                if let Command::Start { reply, .. } = cmd {
                    let exists = format!("run {run_id:?} already exists; resume it instead");
                    let _ = reply.send(Err(ApiError::new(StatusCode::CONFLICT, "run_exists", exists)));
                }
            }
            Command::Start { .. } | Command::Resume { .. } => {
                if runner.phase() == seedloop_core::controller::Phase::Done || error.is_some() {
                    return Some(cmd);
                }
                let busy = ApiError::new(
                    StatusCode::CONFLICT,
                    "run_active",
                    format!("run {run_id:?} is still in progress"),
                );
                match cmd {
                    Command::Start { reply, .. } | Command::Resume { reply, .. } => {
                        let _ = reply.send(Err(busy));
                    }
                    Command::Submit { .. } => unreachable!(),
                }
            }
        }
    }
}
