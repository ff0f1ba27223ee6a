//! Demonstration-pool persistence: JSON Lines with a header record
//! followed by one demonstration per line.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use volregime_core::pool::{DemoPool, Demonstration};

#[derive(Debug, thiserror::Error)]
pub enum PoolIoError {
    #[error("cannot access pool file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed pool file {path} at line {line}: {detail}")]
    Malformed { path: PathBuf, line: usize, detail: String },
}

/// First line of the pool file: provenance needed to reproduce the build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolHeader {
    pub dataset_id: String,
    pub tau: f64,
    /// Requested pool size n (the body may be smaller if training data ran out).
    pub n: usize,
    /// Refinement iterations J.
    pub j: u32,
    pub seed: u64,
    pub size: usize,
}

pub fn write_pool(path: &Path, header: &PoolHeader, pool: &DemoPool) -> Result<(), PoolIoError> {
    let io_err = |source| PoolIoError::Io { path: path.to_path_buf(), source };
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    let mut buf = serde_json::to_string(header).expect("header serialize");
    buf.push('\n');
    for demo in &pool.demonstrations {
        buf.push_str(&serde_json::to_string(demo).expect("demonstration serialize"));
        buf.push('\n');
    }
    file.write_all(buf.as_bytes()).map_err(io_err)
}

pub fn read_pool(path: &Path) -> Result<(PoolHeader, DemoPool), PoolIoError> {
    let file = std::fs::File::open(path)
        .map_err(|source| PoolIoError::Io { path: path.to_path_buf(), source })?;
    let malformed = |line: usize, detail: String| PoolIoError::Malformed {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| malformed(1, "empty file".into()))?
        .map_err(|e| malformed(1, e.to_string()))?;
    let header: PoolHeader =
        serde_json::from_str(&header_line).map_err(|e| malformed(1, e.to_string()))?;

    let mut demonstrations = Vec::with_capacity(header.size);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| malformed(i + 2, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let demo: Demonstration =
            serde_json::from_str(&line).map_err(|e| malformed(i + 2, e.to_string()))?;
        demonstrations.push(demo);
    }
    if demonstrations.len() != header.size {
        return Err(malformed(
            1,
            format!("header claims {} demonstrations, found {}", header.size, demonstrations.len()),
        ));
    }
    let pool = DemoPool {
        demonstrations,
        tau: header.tau,
        created_from: header.dataset_id.clone(),
    };
    Ok((header, pool))
}
