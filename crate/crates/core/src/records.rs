//! Line-delimited JSON files with a leading metadata record.
//!
//! Every artifact file this workspace writes starts with one `meta` line
//! carrying the config hash and seed that produced it, followed by one JSON
//! record per line. f64 values round-trip bit-exactly through serde_json's
//! shortest-representation formatting.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecordsError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: missing leading meta record")]
    MissingMeta { path: String },
}

/// Provenance header present in every artifact file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    pub fn new(kind: &str, config_hash: &str, seed: u64) -> Self {
        Meta { kind: kind.to_string(), config_hash: config_hash.to_string(), seed }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> RecordsError {
    RecordsError::Io { path: path.display().to_string(), source }
}

pub fn write_jsonl<T: Serialize>(
    path: &Path,
    meta: &Meta,
    records: impl IntoIterator<Item = T>,
) -> Result<(), RecordsError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let meta_line = serde_json::to_string(meta).expect("meta serializes");
    writeln!(w, "{meta_line}").map_err(|e| io_err(path, e))?;
    for rec in records {
        let line = serde_json::to_string(&rec).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<(Meta, Vec<T>), RecordsError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut meta: Option<Meta> = None;
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let json_err = |source| RecordsError::Json {
            path: path.display().to_string(),
            line: idx + 1,
            source,
        };
        if meta.is_none() {
            meta = Some(serde_json::from_str(&line).map_err(json_err)?);
        } else {
            records.push(serde_json::from_str(&line).map_err(json_err)?);
        }
    }
    let meta = meta.ok_or_else(|| RecordsError::MissingMeta { path: path.display().to_string() })?;
    Ok((meta, records))
}

/// A point on a named series; the plot-ready record format emitted next to
/// every results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
}
