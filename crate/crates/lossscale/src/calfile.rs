//! Calibrator documents.
//!
//! ```text
//! kind ts
//! classes 10
//! params 1
//! 2.31462801e0
//! ```
//!
//! PTS adds `top_s`, `hidden_layers` and `hidden_width` lines; ETS adds
//! `ets_sum_to_one`. Parameters are the raw optimizer values, written with 9
//! significant digits.

use std::fmt::Write as _;
use std::path::Path;

use lossscale_core::{Calibrator, CalibratorKind, PtsArch};

use crate::error::{Error, FormatError, Result};
use crate::io::write_file;

pub fn encode_calibrator(cal: &Calibrator) -> String {
    let mut out = String::new();
    writeln!(out, "kind {}", cal.kind().name().to_ascii_lowercase()).unwrap();
    writeln!(out, "classes {}", cal.classes()).unwrap();
    if let Some(a) = cal.arch() {
        writeln!(out, "top_s {}", a.top_s).unwrap();
        writeln!(out, "hidden_layers {}", a.hidden_layers).unwrap();
        writeln!(out, "hidden_width {}", a.hidden_width).unwrap();
    }
    if cal.kind() == CalibratorKind::Ets {
        writeln!(out, "ets_sum_to_one {}", cal.ets_sum_to_one()).unwrap();
    }
    writeln!(out, "params {}", cal.params().len()).unwrap();
    for p in cal.params() {
        writeln!(out, "{p:.8e}").unwrap();
    }
    out
}

fn malformed(msg: impl Into<String>) -> FormatError {
    FormatError::Malformed(msg.into())
}

pub fn decode_calibrator(text: &str) -> std::result::Result<Calibrator, FormatError> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let mut kind = None;
    let mut classes = None;
    let mut top_s = None;
    let mut hidden_layers = None;
    let mut hidden_width = None;
    let mut sum_to_one = false;
    let mut count = None;
    for line in lines.by_ref() {
        let (key, value) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| malformed(format!("line {line:?}")))?;
        let value = value.trim();
        let number = || {
            value
                .parse::<usize>()
                .map_err(|_| malformed(format!("{key} must be an integer")))
        };
        match key {
            "kind" => {
                kind = Some(
                    CalibratorKind::parse(value)
                        .ok_or_else(|| malformed(format!("unknown kind {value:?}")))?,
                )
            }
            "classes" => classes = Some(number()?),
            "top_s" => top_s = Some(number()?),
            "hidden_layers" => hidden_layers = Some(number()?),
            "hidden_width" => hidden_width = Some(number()?),
            "ets_sum_to_one" => {
                sum_to_one = value
                    .parse()
                    .map_err(|_| malformed("ets_sum_to_one must be true or false"))?
            }
            "params" => {
                count = Some(number()?);
                break;
            }
            other => return Err(malformed(format!("unknown key {other:?}"))),
        }
    }
    let kind = kind.ok_or_else(|| malformed("missing kind"))?;
    let classes = classes.ok_or_else(|| malformed("missing classes"))?;
    let count = count.ok_or_else(|| malformed("missing params"))?;
    let mut params = Vec::with_capacity(count);
    for (row, line) in lines.enumerate() {
        let v: f64 = line.parse().map_err(|_| FormatError::BadNumber {
            row,
            col: 0,
            text: line.to_string(),
        })?;
        params.push(v);
    }
    if params.len() != count {
        return Err(FormatError::RowCount {
            declared: count,
            found: params.len(),
        });
    }
    let arch = match kind {
        CalibratorKind::Pts => Some(PtsArch {
            top_s: top_s.ok_or_else(|| malformed("PTS needs top_s"))?,
            hidden_layers: hidden_layers.ok_or_else(|| malformed("PTS needs hidden_layers"))?,
            hidden_width: hidden_width.ok_or_else(|| malformed("PTS needs hidden_width"))?,
        }),
        _ => None,
    };
    let mut cal = Calibrator::from_params(kind, classes, arch, params)?;
    cal.set_ets_sum_to_one(sum_to_one);
    Ok(cal)
}

pub fn read_calibrator(path: &Path) -> Result<Calibrator> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_calibrator(&text).map_err(|e| Error::format(path, e))
}

pub fn write_calibrator(cal: &Calibrator, path: &Path) -> Result<()> {
    write_file(path, encode_calibrator(cal).as_bytes())
}
