//! On-disk layout of a run directory.
//!
//! ```text
//! config.json        RunConfig, written once
//! state.snapshot     full RunState, replaced atomically after every transition
//! annotations.log    training annotations, append-only NDJSON with a header line
//! evaluation.log     audit answers, same format, never read by training
//! pending.answers    human answers for the batch currently outstanding
//! iterations.report  one IterationRecord per line
//! evaluation.report  EvaluationRecord (JSON) once the audit is done
//! evaluation.txt     the same as a text table
//! ```
//!
//! Logs are written before the snapshot, so after a crash a log can be ahead
//! of the snapshot by at most one batch. A complete trailing batch is
//! replayed by the runner; an incomplete one was never acknowledged and is
//! cut off.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use seedloop_core::controller::{IterationRecord, RunState};
use seedloop_core::evaluation::EvaluationOutcome;
use seedloop_core::{Annotation, Label, Purpose, Timestamp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;

pub const CONFIG_FILE: &str = "config.json";
pub const SNAPSHOT_FILE: &str = "state.snapshot";
pub const ANNOTATIONS_LOG: &str = "annotations.log";
pub const EVALUATION_LOG: &str = "evaluation.log";
pub const PENDING_ANSWERS: &str = "pending.answers";
pub const ITERATIONS_REPORT: &str = "iterations.report";
pub const EVALUATION_REPORT: &str = "evaluation.report";
pub const EVALUATION_TABLE: &str = "evaluation.txt";

pub const LOG_FORMAT: &str = "seedloop-annotation-log";
pub const PENDING_FORMAT: &str = "seedloop-pending-answers";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("{0} already holds a run")]
    AlreadyExists(PathBuf),
    #[error("{0} is not a run directory")]
    NotARun(PathBuf),
    #[error("injected fault")]
    InjectedFault,
    #[error("sequence gap: expected {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Which of the two annotation logs a record belongs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogKind {
    Training,
    Evaluation,
}

impl LogKind {
    pub fn of(purpose: Purpose) -> Self {
        if purpose.is_training() {
            LogKind::Training
        } else {
            LogKind::Evaluation
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            LogKind::Training => ANNOTATIONS_LOG,
            LogKind::Evaluation => EVALUATION_LOG,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub log: LogKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationLogRecord {
    /// Starts at 1, no gaps.
    pub sequence_no: u64,
    pub purpose: Purpose,
    pub request_id: String,
    pub annotation: Annotation,
}

/// A human answer accepted for the outstanding batch but not yet committed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingAnswer {
    pub request_id: String,
    pub label: Label,
    pub oracle_id: String,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PendingHeader {
    format: String,
    version: u32,
    /// `<purpose>-<iteration>` of the batch the answers belong to.
    batch: String,
}

/// Machine-readable evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub method: String,
    pub category: String,
    pub oracle_id: String,
    pub outcome: EvaluationOutcome,
}

/// Counts down durable writes and fails the one that exhausts the budget,
/// leaving a half-written file behind, the way a kill would.
#[derive(Debug, Clone, Copy, Default)]
pub struct FaultPlan {
    remaining: Option<u64>,
}

impl FaultPlan {
    pub fn after_writes(n: u64) -> Self {
        FaultPlan { remaining: Some(n) }
    }

    fn hit(&mut self) -> bool {
        match &mut self.remaining {
            Some(0) => true,
            Some(n) => {
                *n -= 1;
                false
            }
            None => false,
        }
    }
}

fn write_lines(file: &mut File, path: &Path, bytes: &[u8], faults: &mut FaultPlan) -> Result<(), StoreError> {
    if faults.hit() {
        file.write_all(&bytes[..bytes.len() / 2]).map_err(io_err(path))?;
        return Err(StoreError::InjectedFault);
    }
    file.write_all(bytes).map_err(io_err(path))?;
    file.sync_data().map_err(io_err(path))
}

/// Replaces `path` via a temporary sibling and rename.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8], faults: &mut FaultPlan) -> Result<(), StoreError> {
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    if faults.hit() {
        f.write_all(&bytes[..bytes.len() / 2]).map_err(io_err(&tmp))?;
        return Err(StoreError::InjectedFault);
    }
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, &path).map_err(io_err(&path))?;
    sync_dir(dir)
}

fn sync_dir(dir: &Path) -> Result<(), StoreError> {
    // Directories cannot be opened for syncing on every platform.
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

fn json_line<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec(value).expect("log records serialize");
    v.push(b'\n');
    v
}

/// Complete lines of a file plus the byte offset just past each one. A torn
/// tail (no final newline) is reported separately.
fn read_lines(path: &Path) -> Result<(Vec<String>, Vec<u64>, bool), StoreError> {
    let mut reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut lines = Vec::new();
    let mut ends = Vec::new();
    let mut offset = 0u64;
    let mut torn = false;
    loop {
        let mut buf = Vec::new();
        let n = reader.read_until(b'\n', &mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        if buf.last() != Some(&b'\n') {
            torn = true;
            break;
        }
        offset += n as u64;
        buf.pop();
        match String::from_utf8(buf) {
            Ok(s) => lines.push(s),
            Err(_) => {
                return Err(StoreError::Corrupt {
                    path: path.to_path_buf(),
                    message: format!("line {} is not UTF-8", lines.len() + 1),
                })
            }
        }
        ends.push(offset);
    }
    Ok((lines, ends, torn))
}

struct AppendLog {
    path: PathBuf,
    file: File,
    /// Byte offset after the header and after each record.
    ends: Vec<u64>,
}

impl AppendLog {
    fn create(path: PathBuf, kind: LogKind) -> Result<Self, StoreError> {
        let mut file = OpenOptions::new()
            .create_new(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let header = json_line(&LogHeader {
            format: LOG_FORMAT.into(),
            version: LOG_VERSION,
            log: kind,
        });
        file.write_all(&header).map_err(io_err(&path))?;
        file.sync_all().map_err(io_err(&path))?;
        Ok(AppendLog {
            path,
            file,
            ends: vec![header.len() as u64],
        })
    }

    fn open(path: PathBuf, kind: LogKind) -> Result<(Self, Vec<AnnotationLogRecord>), StoreError> {
        let corrupt = |message: String| StoreError::Corrupt {
            path: path.clone(),
            message,
        };
        let (lines, ends, torn) = read_lines(&path)?;
        let header: LogHeader = lines
            .first()
            .and_then(|l| serde_json::from_str(l).ok())
            .ok_or_else(|| corrupt("missing header line".into()))?;
        if header.format != LOG_FORMAT || header.log != kind {
            return Err(corrupt(format!("unexpected header {header:?}")));
        }
        if header.version != LOG_VERSION {
            return Err(corrupt(format!("log version {} is not supported", header.version)));
        }
        let mut records = Vec::with_capacity(lines.len() - 1);
        let mut keep = lines.len();
        for (i, line) in lines.iter().enumerate().skip(1) {
            match serde_json::from_str::<AnnotationLogRecord>(line) {
                Ok(r) if r.sequence_no == i as u64 => records.push(r),
                Ok(r) => {
                    return Err(corrupt(format!(
                        "line {}: sequence_no {} out of order",
                        i + 1,
                        r.sequence_no
                    )))
                }
                // Only the final line can be a casualty of a crash.
                Err(_) if i + 1 == lines.len() => keep = i,
                Err(e) => return Err(corrupt(format!("line {}: {e}", i + 1))),
            }
        }
        let ends = ends[..keep].to_vec();
        let file = OpenOptions::new()
            .read(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut log = AppendLog { path, file, ends };
        if torn || keep < lines.len() {
            log.truncate_records(records.len())?;
        }
        Ok((log, records))
    }

    fn len(&self) -> u64 {
        self.ends.len() as u64 - 1
    }

    fn truncate_records(&mut self, n: usize) -> Result<(), StoreError> {
        let end = self.ends[n];
        self.file.set_len(end).map_err(io_err(&self.path))?;
        self.file.seek(SeekFrom::End(0)).map_err(io_err(&self.path))?;
        self.file.sync_all().map_err(io_err(&self.path))?;
        self.ends.truncate(n + 1);
        Ok(())
    }

    fn append(&mut self, records: &[AnnotationLogRecord], faults: &mut FaultPlan) -> Result<(), StoreError> {
        let mut buf = Vec::new();
        let mut ends = Vec::with_capacity(records.len());
        let mut offset = *self.ends.last().expect("header end");
        for (i, r) in records.iter().enumerate() {
            let expected = self.len() + 1 + i as u64;
            if r.sequence_no != expected {
                return Err(StoreError::SequenceGap {
                    expected,
                    got: r.sequence_no,
                });
            }
            let line = json_line(r);
            offset += line.len() as u64;
            ends.push(offset);
            buf.extend_from_slice(&line);
        }
        write_lines(&mut self.file, &self.path, &buf, faults)?;
        self.ends.extend(ends);
        Ok(())
    }
}

/// What [`RunStore::open`] found on disk.
pub struct Recovered {
    pub config: RunConfig,
    pub state: RunState,
    pub training_log: Vec<AnnotationLogRecord>,
    pub evaluation_log: Vec<AnnotationLogRecord>,
    /// Persisted human answers for the batch named in the file.
    pub pending: Option<(String, Vec<PendingAnswer>)>,
}

pub struct RunStore {
    dir: PathBuf,
    training: AppendLog,
    evaluation: AppendLog,
    pending: Option<File>,
    faults: FaultPlan,
}

impl RunStore {
    /// Lays out a fresh run directory. The directory may exist but must not
    /// already contain a run.
    pub fn create(dir: &Path, config: &RunConfig, state: &RunState) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        if dir.join(SNAPSHOT_FILE).exists() || dir.join(ANNOTATIONS_LOG).exists() {
            return Err(StoreError::AlreadyExists(dir.to_path_buf()));
        }
        let mut faults = FaultPlan::default();
        let cfg = serde_json::to_vec_pretty(config).expect("config serializes");
        write_atomic(dir, CONFIG_FILE, &cfg, &mut faults)?;
        let training = AppendLog::create(dir.join(ANNOTATIONS_LOG), LogKind::Training)?;
        let evaluation = AppendLog::create(dir.join(EVALUATION_LOG), LogKind::Evaluation)?;
        let mut store = RunStore {
            dir: dir.to_path_buf(),
            training,
            evaluation,
            pending: None,
            faults,
        };
        store.write_snapshot(state)?;
        Ok(store)
    }

    pub fn open(dir: &Path) -> Result<(Self, Recovered), StoreError> {
        let snapshot = dir.join(SNAPSHOT_FILE);
        if !snapshot.exists() {
            return Err(StoreError::NotARun(dir.to_path_buf()));
        }
        let config: RunConfig = read_json(&dir.join(CONFIG_FILE))?;
        let state: RunState = read_json(&snapshot)?;
        let (training, training_log) = AppendLog::open(dir.join(ANNOTATIONS_LOG), LogKind::Training)?;
        let (evaluation, evaluation_log) = AppendLog::open(dir.join(EVALUATION_LOG), LogKind::Evaluation)?;
        let pending = read_pending(&dir.join(PENDING_ANSWERS))?;
        for name in [
            SNAPSHOT_FILE,
            CONFIG_FILE,
            ITERATIONS_REPORT,
            EVALUATION_REPORT,
            EVALUATION_TABLE,
            PENDING_ANSWERS,
        ] {
            let _ = fs::remove_file(dir.join(format!(".{name}.tmp")));
        }
        let store = RunStore {
            dir: dir.to_path_buf(),
            training,
            evaluation,
            pending: None,
            faults: FaultPlan::default(),
        };
        Ok((
            store,
            Recovered {
                config,
                state,
                training_log,
                evaluation_log,
                pending,
            },
        ))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn set_faults(&mut self, faults: FaultPlan) {
        self.faults = faults;
    }

    pub fn log_len(&self, kind: LogKind) -> u64 {
        match kind {
            LogKind::Training => self.training.len(),
            LogKind::Evaluation => self.evaluation.len(),
        }
    }

    /// Appends one batch as a single durable write.
    pub fn append_batch(&mut self, kind: LogKind, records: &[AnnotationLogRecord]) -> Result<(), StoreError> {
        let log = match kind {
            LogKind::Training => &mut self.training,
            LogKind::Evaluation => &mut self.evaluation,
        };
        log.append(records, &mut self.faults)
    }

    /// Drops records after the first `n`. Only for records that were never
    /// acknowledged.
    pub fn truncate_log(&mut self, kind: LogKind, n: usize) -> Result<(), StoreError> {
        match kind {
            LogKind::Training => self.training.truncate_records(n),
            LogKind::Evaluation => self.evaluation.truncate_records(n),
        }
    }

    pub fn write_snapshot(&mut self, state: &RunState) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec(state).expect("state serializes");
        write_atomic(&self.dir, SNAPSHOT_FILE, &bytes, &mut self.faults)
    }

    /// Starts a fresh pending-answers file for `batch`, dropping any answers
    /// for an earlier batch.
    pub fn reset_pending(&mut self, batch: &str, answers: &[PendingAnswer]) -> Result<(), StoreError> {
        self.pending = None;
        let mut bytes = json_line(&PendingHeader {
            format: PENDING_FORMAT.into(),
            version: LOG_VERSION,
            batch: batch.into(),
        });
        for a in answers {
            bytes.extend(json_line(a));
        }
        write_atomic(&self.dir, PENDING_ANSWERS, &bytes, &mut self.faults)
    }

    /// Durably records one human answer. Call [`RunStore::reset_pending`]
    /// first for each new batch.
    pub fn append_pending(&mut self, answer: &PendingAnswer) -> Result<(), StoreError> {
        let path = self.dir.join(PENDING_ANSWERS);
        if self.pending.is_none() {
            let f = OpenOptions::new().append(true).open(&path).map_err(io_err(&path))?;
            self.pending = Some(f);
        }
        let file = self.pending.as_mut().expect("just opened");
        write_lines(file, &path, &json_line(answer), &mut self.faults)
    }

    pub fn write_iterations(&mut self, iterations: &[IterationRecord]) -> Result<(), StoreError> {
        let bytes: Vec<u8> = iterations.iter().flat_map(json_line).collect();
        write_atomic(&self.dir, ITERATIONS_REPORT, &bytes, &mut self.faults)
    }

    pub fn write_evaluation(&mut self, record: &EvaluationRecord, table: &str) -> Result<(), StoreError> {
        write_evaluation_files(&self.dir, record, table)
    }
}

/// Writes `evaluation.report` and `evaluation.txt` into `dir`.
pub fn write_evaluation_files(dir: &Path, record: &EvaluationRecord, table: &str) -> Result<(), StoreError> {
    let mut faults = FaultPlan::default();
    let mut bytes = serde_json::to_vec_pretty(record).expect("report serializes");
    bytes.push(b'\n');
    write_atomic(dir, EVALUATION_REPORT, &bytes, &mut faults)?;
    write_atomic(dir, EVALUATION_TABLE, table.as_bytes(), &mut faults)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Reads an annotation log without opening it for writing.
pub fn read_log(path: &Path) -> Result<Vec<AnnotationLogRecord>, StoreError> {
    let (lines, _, _) = read_lines(path)?;
    lines
        .iter()
        .skip(1)
        .map(|l| {
            serde_json::from_str(l).map_err(|e| StoreError::Corrupt {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_iterations(dir: &Path) -> Result<Vec<IterationRecord>, StoreError> {
    let path = dir.join(ITERATIONS_REPORT);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let (lines, _, _) = read_lines(&path)?;
    lines
        .iter()
        .map(|l| {
            serde_json::from_str(l).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                message: e.to_string(),
            })
        })
        .collect()
}

fn read_pending(path: &Path) -> Result<Option<(String, Vec<PendingAnswer>)>, StoreError> {
    if !path.exists() {
        return Ok(None);
    }
    let (lines, _, _) = read_lines(path)?;
    let Some(header) = lines
        .first()
        .and_then(|l| serde_json::from_str::<PendingHeader>(l).ok())
    else {
        return Ok(None);
    };
    if header.format != PENDING_FORMAT {
        return Err(StoreError::Corrupt {
            path: path.to_path_buf(),
            message: "unexpected header".into(),
        });
    }
    // A torn or garbled last answer was never acknowledged.
    let answers = lines
        .iter()
        .skip(1)
        .map_while(|l| serde_json::from_str(l).ok())
        .collect();
    Ok(Some((header.batch, answers)))
}

/// Name used in `pending.answers` headers.
pub fn batch_tag(purpose: Purpose, iteration: u32) -> String {
    format!("{}-{}", purpose.as_str(), iteration)
}
