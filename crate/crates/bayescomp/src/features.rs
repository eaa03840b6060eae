//! Feature matrices on disk: CSV with a `dim_0,...` header, or the BNCF
//! binary layout (16-byte header `BNCF`, version, D, N; then little-endian
//! f32 rows). Both store values at f32 precision.

use std::fs;
use std::path::Path;

use crate::error::{HarnessError, Result};

const MAGIC: &[u8; 4] = b"BNCF";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFormat {
    Csv,
    Bin,
}

impl FeatureFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FeatureFormat::Csv => "csv",
            FeatureFormat::Bin => "bncf",
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(FeatureFormat::Csv),
            Some("bncf") => Ok(FeatureFormat::Bin),
            _ => Err(HarnessError::Format { path: path.into(), detail: "expected a .csv or .bncf extension".into() }),
        }
    }
}

fn check_rows(frames: &[Vec<f64>]) -> Option<usize> {
    let d = frames.first().map_or(0, Vec::len);
    frames.iter().all(|f| f.len() == d).then_some(d)
}

pub fn encode_csv(frames: &[Vec<f64>], dim: usize) -> Vec<u8> {
    let mut out = String::new();
    let header: Vec<String> = (0..dim).map(|d| format!("dim_{d}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for f in frames {
        let row: Vec<String> = f.iter().map(|&v| (v as f32).to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn decode_csv(bytes: &[u8], path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let fail = |detail: String| HarnessError::Format { path: path.into(), detail };
    let headers = reader.headers().map_err(|source| HarnessError::Csv { path: path.into(), source })?.clone();
    for (d, h) in headers.iter().enumerate() {
        if h != format!("dim_{d}") {
            return Err(fail(format!("header column {d} is {h:?}, expected dim_{d}")));
        }
    }
    let mut frames = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|source| HarnessError::Csv { path: path.into(), source })?;
        let row = record
            .iter()
            .map(|v| v.trim().parse::<f32>().map(f64::from))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| fail(format!("row {n}: {e}")))?;
        if row.len() != headers.len() {
            return Err(fail(format!("row {n} has {} values, header has {}", row.len(), headers.len())));
        }
        frames.push(row);
    }
    Ok(frames)
}

pub fn encode_bin(frames: &[Vec<f64>], dim: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * dim * frames.len());
    out.extend_from_slice(MAGIC);
    for v in [VERSION, dim as u32, frames.len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in frames.iter().flatten() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_bin(bytes: &[u8], path: &Path) -> Result<Vec<Vec<f64>>> {
    let fail = |detail: &str| HarnessError::Format { path: path.into(), detail: detail.into() };
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(fail("missing BNCF header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4-byte slice"));
    if word(4) != VERSION {
        return Err(fail("unsupported BNCF version"));
    }
    let (dim, n) = (word(8) as usize, word(12) as usize);
    if bytes.len() != 16 + 4 * dim * n {
        return Err(fail("payload length does not match D x N"));
    }
    let values: Vec<f64> =
        bytes[16..].chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4-byte chunk")))).collect();
    Ok(if dim == 0 { vec![Vec::new(); n] } else { values.chunks(dim).map(<[f64]>::to_vec).collect() })
}

/// Writes `frames` in the format implied by the file extension.
pub fn write_features(path: &Path, frames: &[Vec<f64>]) -> Result<()> {
    let dim = check_rows(frames)
        .ok_or_else(|| HarnessError::Format { path: path.into(), detail: "ragged feature matrix".into() })?;
    let bytes = match FeatureFormat::from_path(path)? {
        FeatureFormat::Csv => encode_csv(frames, dim),
        FeatureFormat::Bin => encode_bin(frames, dim),
    };
    fs::write(path, bytes).map_err(HarnessError::io(path))
}

pub fn read_features(path: &Path) -> Result<Vec<Vec<f64>>> {
    let format = FeatureFormat::from_path(path)?;
    let bytes = fs::read(path).map_err(HarnessError::io(path))?;
    match format {
        FeatureFormat::Csv => decode_csv(&bytes, path),
        FeatureFormat::Bin => decode_bin(&bytes, path),
    }
}
