//! Newline-delimited JSON datasets: one `{"id", "text", "label"?}` object per
//! line.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use seedloop_core::{Pool, PoolError, Record};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Pool { path: PathBuf, source: PoolError },
    #[error("{0} contains no records")]
    Empty(PathBuf),
}

/// Reads every record, skipping blank lines.
pub fn read_records(path: &Path) -> Result<Vec<Record>, DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::with_capacity(1 << 16, File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn load_pool(path: &Path) -> Result<Pool, DatasetError> {
    let records = read_records(path)?;
    if records.is_empty() {
        return Err(DatasetError::Empty(path.to_path_buf()));
    }
    Pool::from_records(records).map_err(|source| DatasetError::Pool {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_records(path: &Path, records: &[Record]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    out.get_ref().sync_all()
}
