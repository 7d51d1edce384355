//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use seedloop::config::{OracleSpec, RunConfig};
use seedloop::dataset::{load_pool, write_records};
use seedloop::runner::DynScorer;
use seedloop::store::{read_log, ANNOTATIONS_LOG};
use seedloop::Runner;
use seedloop_core::controller::Progress;
use seedloop_core::oracle::ScriptedOracle;
use seedloop_core::synth::{generate, SynthSpec};
use seedloop_core::{FixedClock, LoopConfig, Pool, Timestamp};

pub const CLOCK: FixedClock = FixedClock(Timestamp(1_700_000_000_000));

pub struct Fixture {
    pub dataset: PathBuf,
    pub pool: Pool,
    pub scorer: Box<DynScorer>,
    pub config: RunConfig,
}

/// A synthetic corpus written under `dir` and a small run over it.
pub fn fixture(dir: &Path, size: usize, k: usize, max_iterations: u32, oracle: OracleSpec) -> Fixture {
    let dataset = dir.join("corpus.jsonl");
    let records = generate(&SynthSpec {
        size,
        seed: 3,
        ..SynthSpec::default()
    })
    .unwrap();
    write_records(&dataset, &records).unwrap();
    let loop_config = LoopConfig {
        k,
        max_iterations,
        n_eval: 20,
        seed: 11,
        ..LoopConfig::default()
    };
    let mut config = RunConfig::new(loop_config, &dataset, oracle);
    config.audit_oracle = Some(OracleSpec::Scripted);
    let pool = load_pool(&dataset).unwrap();
    let scorer = config.build_scorer().unwrap();
    Fixture {
        dataset,
        pool,
        scorer,
        config,
    }
}

/// Drives an open runner to the end with scripted answers.
pub fn finish(runner: &mut Runner<'_>, oracle_id: &str) -> Result<(), seedloop::RunError> {
    let mut training = ScriptedOracle::with_id(oracle_id);
    let mut audit = ScriptedOracle::new();
    let progress = runner.drive(Some(&mut training), Some(&mut audit), &CLOCK, |_| {})?;
    assert_eq!(progress, Progress::Done);
    Ok(())
}

pub fn run_scripted(dir: &Path, fx: &Fixture, oracle_id: &str) {
    let mut runner = Runner::create(dir, fx.config.clone(), &fx.pool, &*fx.scorer).unwrap();
    finish(&mut runner, oracle_id).unwrap();
}

/// Every file of a run directory by name.
pub fn files(dir: &Path) -> BTreeMap<String, String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read_to_string(e.path()).unwrap(),
            )
        })
        .collect()
}

pub fn training_log(dir: &Path) -> Vec<seedloop::store::AnnotationLogRecord> {
    read_log(&dir.join(ANNOTATIONS_LOG)).unwrap()
}

/// Names of files whose contents differ, or that exist on one side only.
pub fn diff(a: &BTreeMap<String, String>, b: &BTreeMap<String, String>) -> Vec<String> {
    a.keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .cloned()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect()
}
