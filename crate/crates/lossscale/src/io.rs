//! Dataset files.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! b"SCTL" | version u8 (= 1) | N u32 | C u32 | N*C f32 row-major | N u32 labels
//! ```
//!
//! Text layout: a header line `N C`, then `N` lines of `C` decimals followed by
//! the integer label, separated by whitespace.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use lossscale_core::LogitDataset;

use crate::error::{Error, FormatError, Result};

pub const MAGIC: &[u8; 4] = b"SCTL";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Binary,
    Text,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Binary => "sctl",
            Format::Text => "txt",
        }
    }

    /// Binary when the bytes start with the magic, text otherwise.
    pub fn detect(bytes: &[u8]) -> Self {
        if bytes.starts_with(MAGIC) {
            Format::Binary
        } else {
            Format::Text
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "binary" => Ok(Format::Binary),
            "text" => Ok(Format::Text),
            other => Err(format!(
                "unknown format {other:?} (expected binary or text)"
            )),
        }
    }
}

pub fn encode_binary(data: &LogitDataset) -> Vec<u8> {
    let n = data.sample_count();
    let c = data.class_count();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n * (c + 1));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    for v in data.logits() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for y in data.labels() {
        out.extend_from_slice(&y.to_le_bytes());
    }
    out
}

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode_binary(bytes: &[u8]) -> std::result::Result<LogitDataset, FormatError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if bytes[4] != VERSION {
        return Err(FormatError::UnsupportedVersion(bytes[4]));
    }
    let n = le_u32(bytes, 5) as usize;
    let c = le_u32(bytes, 9) as usize;
    if n == 0 || c < 2 {
        return Err(FormatError::Malformed(format!(
            "header declares N={n}, C={c}; need N >= 1, C >= 2"
        )));
    }
    let expected = n
        .checked_mul(c + 1)
        .and_then(|k| k.checked_mul(4))
        .and_then(|k| k.checked_add(HEADER_LEN))
        .ok_or_else(|| FormatError::Malformed(format!("header N={n}, C={c} overflows")))?;
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FormatError::TrailingBytes {
            extra: bytes.len() - expected,
        });
    }
    let body = &bytes[HEADER_LEN..];
    let logits: Vec<f32> = body[..4 * n * c]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    let labels: Vec<u32> = body[4 * n * c..]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    check_rows(&logits, &labels, c)?;
    Ok(LogitDataset::new(logits, labels, c)?)
}

/// Row-ordered validation so the first bad row is the one reported.
fn check_rows(logits: &[f32], labels: &[u32], c: usize) -> std::result::Result<(), FormatError> {
    for (row, &label) in labels.iter().enumerate() {
        if let Some(col) = logits[row * c..(row + 1) * c]
            .iter()
            .position(|v| !v.is_finite())
        {
            return Err(FormatError::NonFinite { row, col });
        }
        if label as usize >= c {
            return Err(FormatError::LabelOutOfRange {
                row,
                label: label as u64,
                classes: c,
            });
        }
    }
    Ok(())
}

/// Text form; `f32` values use the shortest representation that reads back exactly.
pub fn encode_text(data: &LogitDataset) -> String {
    let c = data.class_count();
    let mut out = String::with_capacity(data.sample_count() * c * 12);
    writeln!(out, "{} {}", data.sample_count(), c).unwrap();
    for (i, &y) in data.labels().iter().enumerate() {
        for v in data.row(i) {
            write!(out, "{v} ").unwrap();
        }
        writeln!(out, "{y}").unwrap();
    }
    out
}

pub fn decode_text(text: &str) -> std::result::Result<LogitDataset, FormatError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| FormatError::Malformed("empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let parse_dim = |s: &str| s.parse::<usize>().ok();
    let (n, c) = match fields.as_slice() {
        [a, b] => match (parse_dim(a), parse_dim(b)) {
            (Some(n), Some(c)) => (n, c),
            _ => {
                return Err(FormatError::Malformed(format!(
                    "header {header:?} is not `N C`"
                )))
            }
        },
        _ => {
            return Err(FormatError::Malformed(format!(
                "header {header:?} is not `N C`"
            )))
        }
    };
    if n == 0 || c < 2 {
        return Err(FormatError::Malformed(format!(
            "header declares N={n}, C={c}; need N >= 1, C >= 2"
        )));
    }
    let mut logits = Vec::with_capacity(n * c);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for line in lines {
        if row == n {
            return Err(FormatError::RowCount {
                declared: n,
                found: row + 1,
            });
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != c + 1 {
            return Err(FormatError::RowWidth {
                row,
                expected: c + 1,
                found: fields.len(),
            });
        }
        for (col, f) in fields[..c].iter().enumerate() {
            let v: f32 = f.parse().map_err(|_| FormatError::BadNumber {
                row,
                col,
                text: f.to_string(),
            })?;
            if !v.is_finite() {
                return Err(FormatError::NonFinite { row, col });
            }
            logits.push(v);
        }
        let label: u64 = fields[c].parse().map_err(|_| FormatError::BadNumber {
            row,
            col: c,
            text: fields[c].to_string(),
        })?;
        if label >= c as u64 {
            return Err(FormatError::LabelOutOfRange {
                row,
                label,
                classes: c,
            });
        }
        labels.push(label as u32);
        row += 1;
    }
    if row != n {
        return Err(FormatError::RowCount {
            declared: n,
            found: row,
        });
    }
    Ok(LogitDataset::new(logits, labels, c)?)
}

/// Reads a dataset, detecting the format from the magic bytes unless one is given.
pub fn read_dataset(path: &Path, format: Option<Format>) -> Result<LogitDataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = match format.unwrap_or_else(|| Format::detect(&bytes)) {
        Format::Binary => decode_binary(&bytes),
        Format::Text => match std::str::from_utf8(&bytes) {
            Ok(text) => decode_text(text),
            Err(_) => Err(FormatError::Malformed(
                "text dataset is not valid UTF-8".into(),
            )),
        },
    };
    decoded.map_err(|e| Error::format(path, e))
}

pub fn write_dataset(data: &LogitDataset, path: &Path, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Binary => encode_binary(data),
        Format::Text => encode_text(data).into_bytes(),
    };
    write_file(path, &bytes)
}

/// Writes `bytes`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
