//! Dense matrix files.
//!
//! Binary form: row-major little-endian `f32` in `NAME.bin`, described by a sidecar
//! `NAME.json` manifest `{"rows", "cols", "dtype": "f32", "endianness": "little"}`.
//! Text form: `NAME.tsv`, one row per line, tab-separated (input only).

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixManifest {
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub endianness: String,
}

pub fn manifest_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

pub fn encode_f32(m: &Array2<f32>) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(m.len() * 4);
    for v in m.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

/// Writes `path` (binary) and its sidecar manifest.
pub fn save_f32(path: &Path, m: &Array2<f32>) -> Result<()> {
    let manifest = MatrixManifest {
        rows: m.nrows(),
        cols: m.ncols(),
        dtype: "f32".into(),
        endianness: "little".into(),
    };
    let side = manifest_path(path);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&side, e))?;
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
    std::fs::write(path, encode_f32(m)).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn load_bin(path: &Path) -> Result<Array2<f32>> {
    let side = manifest_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let manifest: MatrixManifest = serde_json::from_str(&text).map_err(|e| Error::json(&side, e))?;
    if manifest.dtype != "f32" || manifest.endianness != "little" {
        return Err(parse_err(
            &side,
            0,
            format!(
                "unsupported dtype/endianness {}/{}",
                manifest.dtype, manifest.endianness
            ),
        ));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = manifest.rows * manifest.cols * 4;
    if bytes.len() != expected {
        return Err(parse_err(
            path,
            0,
            format!("{} bytes, manifest implies {expected}", bytes.len()),
        ));
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Array2::from_shape_vec((manifest.rows, manifest.cols), data).expect("length checked"))
}

fn load_tsv(path: &Path) -> Result<Array2<f32>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split('\t') {
            let v = field
                .trim()
                .parse::<f32>()
                .map_err(|_| parse_err(path, n + 1, format!("not a number: {field:?}")))?;
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => return Err(parse_err(path, n + 1, format!("{width} columns, expected {c}"))),
            _ => {}
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), data).map_err(|e| parse_err(path, 0, e.to_string()))
}

/// Loads a matrix, choosing the text reader for `.tsv` files and the binary reader otherwise.
pub fn load_f32(path: &Path) -> Result<Array2<f32>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") => load_tsv(path),
        _ => load_bin(path),
    }
}

/// Finds `<dir>/<stem>.bin` or `<dir>/<stem>.tsv`.
pub fn find_matrix(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["bin", "tsv"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}
