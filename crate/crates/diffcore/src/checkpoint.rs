use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Write named tensors as plain text:
///
/// ```text
/// # key=value
/// tensor <name> <rows> <cols>
/// <v> <v> ...
/// ```
///
/// Values are printed with 17 significant digits, enough to round-trip any
/// f64 bit pattern.
pub fn save_checkpoint(
    path: &Path,
    tensors: &[(String, Tensor)],
    meta: &BTreeMap<String, String>,
) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    for (k, v) in meta {
        writeln!(w, "# {k}={v}")?;
    }
    for (name, t) in tensors {
        writeln!(w, "tensor {name} {} {}", t.rows(), t.cols())?;
        let mut line = String::new();
        for (i, v) in t.data().iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{v:.16e}"));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

#[allow(clippy::type_complexity)]
pub fn load_checkpoint(
    path: &Path,
) -> Result<(Vec<(String, Tensor)>, BTreeMap<String, String>), CheckpointError> {
    let reader = BufReader::new(File::open(path)?);
    let mut meta = BTreeMap::new();
    let mut tensors = Vec::new();
    let mut pending: Option<(String, usize, usize)> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let parse_err = |message: String| CheckpointError::Parse { line: lineno, message };

        if let Some(rest) = line.strip_prefix("# ") {
            if let Some((k, v)) = rest.split_once('=') {
                meta.insert(k.to_string(), v.to_string());
            }
            continue;
        }
        if let Some((name, rows, cols)) = pending.take() {
            let data: Result<Vec<f64>, _> =
                line.split_whitespace().map(|s| s.parse::<f64>()).collect();
            let data = data.map_err(|e| parse_err(format!("bad value: {e}")))?;
            if data.len() != rows * cols {
                return Err(parse_err(format!(
                    "expected {} values for {name}, found {}",
                    rows * cols,
                    data.len()
                )));
            }
            tensors.push((name, Tensor::new(rows, cols, data)));
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("tensor") => {
                let name = parts
                    .next()
                    .ok_or_else(|| parse_err("missing tensor name".into()))?
                    .to_string();
                let rows: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err("missing rows".into()))?;
                let cols: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err("missing cols".into()))?;
                pending = Some((name, rows, cols));
            }
            Some(other) => return Err(parse_err(format!("unexpected token {other:?}"))),
            None => {}
        }
    }
    if let Some((name, _, _)) = pending {
        return Err(CheckpointError::Parse {
            line: 0,
            message: format!("tensor {name} declared but values missing"),
        });
    }
    Ok((tensors, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let tensors = vec![
            ("w".to_string(), Tensor::new(2, 3, vec![0.1, -1.5e-300, 3.0, f64::MIN_POSITIVE, 1.0 / 3.0, 2.0f64.sqrt()])),
            ("b".to_string(), Tensor::scalar(-0.25)),
        ];
        let mut meta = BTreeMap::new();
        meta.insert("seed".to_string(), "17".to_string());
        save_checkpoint(&path, &tensors, &meta).unwrap();
        let (loaded, loaded_meta) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded_meta.get("seed").map(String::as_str), Some("17"));
        assert_eq!(loaded.len(), tensors.len());
        for ((n1, t1), (n2, t2)) in tensors.iter().zip(&loaded) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            for (a, b) in t1.data().iter().zip(t2.data()) {
                assert_eq!(a.to_bits(), b.to_bits(), "{n1}: {a} vs {b}");
            }
        }
    }
}
