//! File formats: tensors (JSON and compact binary) and panels (CSV).
//!
//! JSON tensors carry `n`, `t`, `m` and `slices`, an `m`-element array of
//! `n x n` row-major arrays of `[re, im]` pairs. The binary form is the
//! 16-byte magic `SPECGRAPHTENSOR1`, then `n`, `t`, `m` as little-endian
//! `u64`, then `m * n * n` little-endian `f64` `(re, im)` pairs in
//! slice-major, row-major order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{CMatrix, FrequencyTensor, TimeSeriesPanel};

pub const BINARY_MAGIC: &[u8; 16] = b"SPECGRAPHTENSOR1";

#[derive(Debug, Serialize, Deserialize)]
struct TensorJson {
    n: usize,
    t: usize,
    m: usize,
    slices: Vec<Vec<Vec<[f64; 2]>>>,
}

pub fn tensor_to_json(tensor: &FrequencyTensor) -> Result<String> {
    let n = tensor.n();
    let doc = TensorJson {
        n,
        t: tensor.t(),
        m: tensor.m(),
        slices: tensor
            .slices()
            .iter()
            .map(|s| {
                (0..n)
                    .map(|i| (0..n).map(|j| [s[(i, j)].re, s[(i, j)].im]).collect())
                    .collect()
            })
            .collect(),
    };
    Ok(serde_json::to_string(&doc)?)
}

pub fn tensor_from_json(text: &str) -> Result<FrequencyTensor> {
    let doc: TensorJson = serde_json::from_str(text)?;
    if doc.slices.len() != doc.m {
        return Err(Error::Format(format!(
            "header says m = {} but {} slices are present",
            doc.m,
            doc.slices.len()
        )));
    }
    let mut slices = Vec::with_capacity(doc.m);
    for (k, rows) in doc.slices.iter().enumerate() {
        if rows.len() != doc.n || rows.iter().any(|r| r.len() != doc.n) {
            return Err(Error::Format(format!("slice {k} is not {0}x{0}", doc.n)));
        }
        slices.push(CMatrix::from_fn(doc.n, doc.n, |i, j| {
            Complex64::new(rows[i][j][0], rows[i][j][1])
        }));
    }
    FrequencyTensor::new(doc.t, slices)
}

pub fn tensor_to_binary(tensor: &FrequencyTensor) -> Vec<u8> {
    let n = tensor.n();
    let mut out = Vec::with_capacity(16 + 24 + tensor.m() * n * n * 16);
    out.extend_from_slice(BINARY_MAGIC);
    for v in [n, tensor.t(), tensor.m()] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for s in tensor.slices() {
        for i in 0..n {
            for j in 0..n {
                out.extend_from_slice(&s[(i, j)].re.to_le_bytes());
                out.extend_from_slice(&s[(i, j)].im.to_le_bytes());
            }
        }
    }
    out
}

pub fn tensor_from_binary(bytes: &[u8]) -> Result<FrequencyTensor> {
    if bytes.len() < 40 || &bytes[..16] != BINARY_MAGIC {
        return Err(Error::Format("missing tensor magic".into()));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    let (n, t, m) = (word(16), word(24), word(32));
    let expected = n
        .checked_mul(n)
        .and_then(|v| v.checked_mul(m))
        .and_then(|v| v.checked_mul(16))
        .and_then(|v| v.checked_add(40))
        .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "expected {expected} bytes for n={n}, m={m}, found {}",
            bytes.len()
        )));
    }
    let float = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let mut at = 40;
    let mut slices = Vec::with_capacity(m);
    for _ in 0..m {
        let mut s = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = Complex64::new(float(at), float(at + 8));
                at += 16;
            }
        }
        slices.push(s);
    }
    FrequencyTensor::new(t, slices)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorFormat {
    Json,
    Binary,
}

impl TensorFormat {
    /// `.bin` selects the binary form, anything else JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => TensorFormat::Binary,
            _ => TensorFormat::Json,
        }
    }
}

pub fn write_tensor(path: &Path, tensor: &FrequencyTensor) -> Result<()> {
    match TensorFormat::from_path(path) {
        TensorFormat::Json => fs::write(path, tensor_to_json(tensor)?)?,
        TensorFormat::Binary => fs::write(path, tensor_to_binary(tensor))?,
    }
    Ok(())
}

/// Reads either format, sniffing the magic rather than trusting the extension.
pub fn read_tensor(path: &Path) -> Result<FrequencyTensor> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.starts_with(BINARY_MAGIC) {
        tensor_from_binary(&bytes)
    } else {
        let text =
            String::from_utf8(bytes).map_err(|_| Error::Format("tensor file is not UTF-8".into()))?;
        tensor_from_json(&text)
    }
}

/// Parses one series per row; the first row is skipped when `header` is set.
pub fn read_panel_csv(reader: impl Read, header: bool) -> Result<TimeSeriesPanel> {
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if (header && lineno == 0) || line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    Error::Format(format!("line {}: `{}` is not a number", lineno + 1, f.trim()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    TimeSeriesPanel::from_rows(&rows)
}

pub fn write_panel_csv(mut writer: impl Write, panel: &TimeSeriesPanel) -> Result<()> {
    for i in 0..panel.n() {
        let line = panel.row(i).iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",");
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

pub fn read_panel_file(path: &Path, header: bool) -> Result<TimeSeriesPanel> {
    read_panel_csv(fs::File::open(path)?, header)
}

pub fn write_panel_file(path: &Path, panel: &TimeSeriesPanel) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write_panel_csv(&mut f, panel)?;
    f.flush()?;
    Ok(())
}

/// Real matrix helper for callers that build panels directly.
pub fn panel_from_matrix(data: DMatrix<f64>) -> Result<TimeSeriesPanel> {
    TimeSeriesPanel::new(data)
}
