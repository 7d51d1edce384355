//! The `seedloop` command line.
//!
//! Exit codes: 0 success, 2 usage, 3 data, 4 oracle or scorer transport,
//! 5 invariant violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use seedloop_core::controller::{Phase, Progress};
use seedloop_core::synth::{default_lexicon_text, generate, SynthCategory, SynthSpec};
use seedloop_core::{LoopConfig, LoopError, OracleError, StrategyId};
use thiserror::Error;

use crate::config::{OracleSpec, RunConfig, ScorerSpec, SpecError};
use crate::dataset::{load_pool, write_records, DatasetError};
use crate::report::{compare_dirs, evaluate_zero_shot, single_table, CompareError};
use crate::runner::{read_config, RunError, Runner, SystemClock};
use crate::service::{ServiceOptions, DEFAULT_LISTEN, LISTEN_ENV};
use crate::store::{write_evaluation_files, StoreError, CONFIG_FILE};

#[derive(Debug, Parser)]
#[command(name = "seedloop", version, about = "Active learning with a zero-shot cold start")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labeled corpus.
    Synth(SynthArgs),
    /// Run the loop into a run directory.
    Run(RunArgs),
    /// Audit a finished run, or the zero-shot scorer on its own.
    Evaluate(EvaluateArgs),
    /// Tabulate the evaluations of two or more run directories.
    Compare(CompareArgs),
    /// Serve the HTTP API for human annotation.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10_000)]
    pub size: usize,
    #[arg(long, default_value = "coffee")]
    pub category: String,
    #[arg(long, default_value_t = 0.10)]
    pub positive_fraction: f64,
    #[arg(long, default_value_t = 0.05)]
    pub ambiguous_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the matching zero-shot lexicon.
    #[arg(long)]
    pub lexicon_out: Option<PathBuf>,
}

/// Flags shared by `run` and `evaluate --zero-shot`. Unset flags fall back
/// to `--config`, then to the defaults.
#[derive(Debug, Args, Default)]
pub struct LoopArgs {
    /// Run config file, the same record `POST /runs` accepts.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub category: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<u32>,
    #[arg(long)]
    pub n_eval: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub strategy: Option<String>,
    /// scripted, noisy:RHO, remote:URL or human.
    #[arg(long)]
    pub oracle: Option<String>,
    /// Oracle for the final audit; defaults to --oracle.
    #[arg(long)]
    pub audit_oracle: Option<String>,
    /// lexicon, lexicon:PATH or remote:URL.
    #[arg(long)]
    pub scorer: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub loop_args: LoopArgs,
    /// Run directory; defaults to runs/<category>-<strategy>-seed<seed>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue the run in this directory instead of starting one.
    #[arg(long, conflicts_with = "out")]
    pub resume: Option<PathBuf>,
    /// Service that collects human answers.
    #[arg(long, env = "SEEDLOOP_URL")]
    pub service: Option<String>,
    /// Run id on the service.
    #[arg(long)]
    pub run_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Run directory whose snapshot to evaluate.
    #[arg(long, required_unless_present = "zero_shot")]
    pub run: Option<PathBuf>,
    /// Audit the zero-shot scorer's positives instead of a trained model.
    #[arg(long)]
    pub zero_shot: bool,
    /// Where to write the zero-shot evaluation.
    #[arg(long, requires = "zero_shot")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub loop_args: LoopArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub runs: Vec<PathBuf>,
    /// Print the table as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory holding run directories.
    #[arg(long, default_value = "runs")]
    pub root: PathBuf,
    #[arg(long, env = LISTEN_ENV, default_value = DEFAULT_LISTEN)]
    pub listen: String,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Compare(#[from] CompareError),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Service(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_ORACLE: u8 = 4;
pub const EXIT_INVARIANT: u8 = 5;

fn loop_exit(e: &LoopError) -> u8 {
    use seedloop_core::coldstart::ColdStartError;
    match e {
        LoopError::Config(_) => EXIT_USAGE,
        LoopError::Oracle(o) | LoopError::ColdStart(ColdStartError::Oracle(o)) => oracle_exit(o),
        LoopError::Evaluation(seedloop_core::evaluation::EvaluationError::Oracle(o)) => oracle_exit(o),
        LoopError::ColdStart(ColdStartError::Scorer(_)) => EXIT_ORACLE,
        LoopError::PoolTooSmall { .. } | LoopError::MissingPoints(_) | LoopError::FormatVersion(_) => EXIT_DATA,
        LoopError::ColdStart(_) => EXIT_DATA,
        _ => EXIT_INVARIANT,
    }
}

fn oracle_exit(e: &OracleError) -> u8 {
    match e {
        OracleError::MissingHiddenLabel(_) => EXIT_DATA,
        OracleError::FlipProbability(_) => EXIT_USAGE,
        _ => EXIT_ORACLE,
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Spec(
                SpecError::Oracle(_) | SpecError::Scorer(_) | SpecError::Config(_) | SpecError::HumanInProcess,
            ) => EXIT_USAGE,
            CliError::Spec(SpecError::OracleSetup(o)) => oracle_exit(o),
            CliError::Spec(_) => EXIT_DATA,
            CliError::Dataset(_) | CliError::Data(_) | CliError::Io(_) => EXIT_DATA,
            CliError::Loop(e) | CliError::Run(RunError::Loop(e)) => loop_exit(e),
            CliError::Run(RunError::Spec(_)) => EXIT_USAGE,
            CliError::Run(RunError::Store(StoreError::AlreadyExists(_)))
            | CliError::Store(StoreError::AlreadyExists(_)) => EXIT_USAGE,
            CliError::Run(RunError::Store(_)) | CliError::Store(_) => EXIT_DATA,
            CliError::Run(RunError::Inconsistent { .. } | RunError::Poisoned) => EXIT_INVARIANT,
            CliError::Compare(CompareError::Table(_)) => EXIT_USAGE,
            CliError::Compare(_) => EXIT_DATA,
            CliError::Service(_) => EXIT_ORACLE,
        }
    }
}

fn parse_strategy(s: &str) -> Result<StrategyId, CliError> {
    s.parse()
        .map_err(|e: seedloop_core::ConfigError| CliError::Usage(e.to_string()))
}

impl LoopArgs {
    /// Merges file, flags and defaults into a validated config.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                serde_json::from_str::<RunConfig>(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => {
                let dataset = self
                    .dataset
                    .clone()
                    .ok_or_else(|| CliError::Usage("--dataset is required (or pass --config)".into()))?;
                RunConfig::new(LoopConfig::default(), dataset, OracleSpec::Scripted)
            }
        };
        let l = &mut cfg.loop_config;
        if let Some(v) = &self.dataset {
            cfg.dataset = v.clone();
        }
        if let Some(v) = &self.category {
            l.category = v.clone();
        }
        if let Some(v) = self.k {
            l.k = v;
        }
        if let Some(v) = self.max_iters {
            l.max_iterations = v;
        }
        if let Some(v) = self.n_eval {
            l.n_eval = v;
        }
        if let Some(v) = self.seed {
            l.seed = v;
        }
        if let Some(v) = &self.strategy {
            l.strategy = parse_strategy(v)?;
        }
        if let Some(v) = self.threshold {
            l.decision_threshold = v;
        }
        if let Some(v) = &self.oracle {
            cfg.oracle = v.parse()?;
        }
        if let Some(v) = &self.audit_oracle {
            cfg.audit_oracle = Some(v.parse()?);
        }
        if let Some(v) = &self.scorer {
            cfg.scorer = v.parse::<ScorerSpec>()?;
        }
        if let Some(v) = self.temperature {
            cfg.temperature = v;
        }
        cfg.validate().map_err(|e| match e {
            SpecError::Config(c) => CliError::Usage(c.to_string()),
            other => other.into(),
        })?;
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Run(a) => run_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
        Command::Serve(a) => serve(a),
    }
}

/// Parses `args` (program name first) and runs, printing errors to stderr.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let category = SynthCategory::parse(&a.category).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown synthetic category {:?} (expected coffee or tea)",
            a.category
        ))
    })?;
    if a.size == 0 {
        return Err(CliError::Usage("--size must be at least 1".into()));
    }
    let spec = SynthSpec {
        size: a.size,
        category,
        positive_fraction: a.positive_fraction,
        ambiguous_fraction: a.ambiguous_fraction,
        seed: a.seed,
    };
    let records = generate(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    write_records(&a.out, &records)?;
    if let Some(path) = &a.lexicon_out {
        std::fs::write(path, default_lexicon_text(category))?;
    }
    let (pos, amb, neg) = spec.counts();
    println!(
        "wrote {} items to {} ({pos} positive, {amb} ambiguous, {neg} other)",
        records.len(),
        a.out.display()
    );
    Ok(())
}

fn default_run_dir(cfg: &RunConfig) -> PathBuf {
    let l = &cfg.loop_config;
    Path::new("runs").join(format!("{}-{}-seed{}", l.category, l.strategy, l.seed))
}

fn run_cmd(a: RunArgs) -> Result<(), CliError> {
    if let Some(dir) = &a.resume {
        let cfg = read_config(dir)?;
        return drive_dir(dir, cfg, false);
    }
    let cfg = a.loop_args.resolve()?;
    if cfg.needs_human() {
        return start_on_service(&a, cfg);
    }
    let dir = a.out.clone().unwrap_or_else(|| default_run_dir(&cfg));
    drive_dir(&dir, cfg, true)
}

fn drive_dir(dir: &Path, cfg: RunConfig, fresh: bool) -> Result<(), CliError> {
    if cfg.needs_human() {
        return Err(CliError::Usage(
            "this run takes human answers; resume it through the service (POST /runs/{id}/resume)".into(),
        ));
    }
    let pool = load_pool(&cfg.dataset)?;
    let scorer = cfg.build_scorer()?;
    let l = &cfg.loop_config;
    let mut training = cfg.oracle.build(l.seed, &l.category, &cfg.remote)?;
    let mut audit = cfg.audit_oracle().build(l.seed, &l.category, &cfg.remote)?;
    let mut runner = if fresh {
        Runner::create(dir, cfg.clone(), &pool, &*scorer)?
    } else {
        Runner::open(dir, &pool, &*scorer)?
    };
    let progress = runner.drive(Some(&mut *training), Some(&mut *audit), &SystemClock, |r| {
        tracing::debug!(phase = r.phase().as_str(), iteration = r.state().iteration, "progress");
    })?;
    debug_assert_eq!(progress, Progress::Done);
    let state = runner.state();
    println!("run directory: {}", dir.display());
    println!(
        "annotations: {} of {}, models trained: {}",
        state.annotations.len(),
        state.budget(),
        state.model_version
    );
    if let Some(record) = runner.evaluation_record() {
        print!("{}", single_table(&record));
    }
    Ok(())
}

fn service_url(a: &RunArgs) -> String {
    a.service.clone().unwrap_or_else(|| {
        let listen = std::env::var(LISTEN_ENV).unwrap_or_else(|_| DEFAULT_LISTEN.into());
        format!("http://{listen}")
    })
}

fn start_on_service(a: &RunArgs, cfg: RunConfig) -> Result<(), CliError> {
    let base = service_url(a);
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(30)))
        .http_status_as_error(false)
        .build()
        .into();
    agent.get(format!("{base}/status")).call().map_err(|e| {
        CliError::Service(format!(
            "no seedloop service reachable at {base} ({e}); start one with `seedloop serve` and retry"
        ))
    })?;
    let mut body = serde_json::to_value(&cfg).expect("config serializes");
    if let Some(id) = &a.run_id {
        body["run_id"] = serde_json::Value::String(id.clone());
    }
    let mut resp = agent
        .post(format!("{base}/runs"))
        .header("content-type", "application/json")
        .send(body.to_string())
        .map_err(|e| CliError::Service(e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap_or_default();
    if status != 201 {
        return Err(CliError::Service(format!(
            "service refused the run (HTTP {status}): {text}"
        )));
    }
    let v: serde_json::Value = serde_json::from_str(&text).unwrap_or_default();
    println!(
        "run {} started on {base}; answer the candidates at {base}/candidates",
        v["run_id"].as_str().unwrap_or("?")
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    if a.zero_shot {
        let cfg = a.loop_args.resolve()?;
        let pool = load_pool(&cfg.dataset)?;
        let scorer = cfg.build_scorer()?;
        let l = &cfg.loop_config;
        let mut oracle = cfg.audit_oracle().build(l.seed, &l.category, &cfg.remote)?;
        let record = evaluate_zero_shot(&pool, &*scorer, &mut *oracle, l)?;
        let table = single_table(&record);
        if let Some(dir) = &a.out {
            std::fs::create_dir_all(dir)?;
            std::fs::write(
                dir.join(CONFIG_FILE),
                serde_json::to_vec_pretty(&cfg).expect("config serializes"),
            )?;
            write_evaluation_files(dir, &record, &table)?;
        }
        print!("{table}");
        return Ok(());
    }
    let dir = a.run.expect("clap requires --run");
    let mut cfg = read_config(&dir)?;
    if let Some(spec) = &a.loop_args.audit_oracle.as_ref().or(a.loop_args.oracle.as_ref()) {
        cfg.audit_oracle = Some(spec.parse()?);
    }
    let pool = load_pool(&cfg.dataset)?;
    let scorer = cfg.build_scorer()?;
    let mut runner = Runner::open(&dir, &pool, &*scorer)?;
    match runner.phase() {
        Phase::Done => {}
        Phase::Evaluating => {
            let l = &cfg.loop_config;
            let mut audit = cfg.audit_oracle().build(l.seed, &l.category, &cfg.remote)?;
            runner.drive(None, Some(&mut *audit), &SystemClock, |_| {})?;
        }
        other => {
            return Err(CliError::Data(format!(
                "{} is still in phase {}; finish it with `seedloop run --resume {}`",
                dir.display(),
                other.as_str(),
                dir.display()
            )))
        }
    }
    let record = runner
        .evaluation_record()
        .ok_or_else(|| CliError::Data("run finished without an evaluation".into()))?;
    print!("{}", single_table(&record));
    Ok(())
}

fn compare(a: CompareArgs) -> Result<(), CliError> {
    if a.runs.len() < 2 {
        return Err(CliError::Usage(format!(
            "compare needs at least two run directories (got {})",
            a.runs.len()
        )));
    }
    let table = compare_dirs(&a.runs)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&table).expect("table serializes"));
    } else {
        print!("{table}");
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    std::fs::create_dir_all(&a.root)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&a.listen)
            .await
            .map_err(|e| CliError::Usage(format!("cannot listen on {}: {e}", a.listen)))?;
        tracing::info!("listening on http://{}", listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        crate::service::serve(listener, ServiceOptions::new(a.root), shutdown).await?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("seedloop").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let mut base = RunConfig::new(LoopConfig::default(), "corpus.jsonl", OracleSpec::Noisy(0.1));
        base.loop_config.k = 8;
        base.loop_config.seed = 4;
        std::fs::write(&path, serde_json::to_string(&base).unwrap()).unwrap();
        let Command::Run(args) = parse(&["run", "--config", path.to_str().unwrap(), "--seed", "9"]).command else {
            panic!("not a run");
        };
        let cfg = args.loop_args.resolve().unwrap();
        assert_eq!(cfg.loop_config.k, 8);
        assert_eq!(cfg.loop_config.seed, 9);
        assert_eq!(cfg.oracle, OracleSpec::Noisy(0.1));
    }

    #[test]
    fn defaults_without_a_config_file() {
        let Command::Run(args) = parse(&["run", "--dataset", "d.jsonl", "--strategy", "random"]).command else {
            panic!("not a run");
        };
        let cfg = args.loop_args.resolve().unwrap();
        assert_eq!(cfg.loop_config.k, 16);
        assert_eq!(cfg.loop_config.max_iterations, 9);
        assert_eq!(cfg.loop_config.strategy, StrategyId::Random);
        assert_eq!(default_run_dir(&cfg), Path::new("runs/coffee-random-seed0"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::Data("x".into()).exit_code(), EXIT_DATA);
        assert_eq!(CliError::Service("x".into()).exit_code(), EXIT_ORACLE);
        assert_eq!(CliError::Run(RunError::Poisoned).exit_code(), EXIT_INVARIANT);
        let transport = OracleError::Transport {
            attempts: 3,
            message: "down".into(),
        };
        assert_eq!(CliError::Loop(LoopError::Oracle(transport)).exit_code(), EXIT_ORACLE);
    }
}
