//! ESRI ASCII grid reading and writing.
//!
//! Values are written with 17 significant digits, which is enough for every
//! `f64` to survive a write/parse round trip unchanged.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use owa_core::grid::DEFAULT_NODATA;
use owa_core::{GridError, GridMeta, Raster};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AsciiError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("header declares {expected} cells, body holds {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cell {index}: {token:?} is not a number")]
    NonNumericCell { index: usize, token: String },
    #[error("{0}")]
    Grid(#[from] GridError),
}

const KEYS: [&str; 6] = [
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "cellsize",
    "nodata_value",
];

fn header_number(key: &str, token: Option<&str>) -> Result<f64, AsciiError> {
    let token = token.ok_or_else(|| AsciiError::MalformedHeader(format!("{key} has no value")))?;
    token
        .parse::<f64>()
        .map_err(|_| AsciiError::MalformedHeader(format!("{key} value {token:?} is not a number")))
}

fn header_count(key: &str, value: f64) -> Result<usize, AsciiError> {
    if value >= 1.0 && value.fract() == 0.0 && value < 1e15 {
        Ok(value as usize)
    } else {
        Err(AsciiError::MalformedHeader(format!(
            "{key} must be a positive integer, got {value}"
        )))
    }
}

pub fn parse_ascii_grid(text: &str) -> Result<Raster, AsciiError> {
    let mut header: [Option<f64>; 6] = [None; 6];
    let mut lines = text.lines().peekable();
    while let Some(line) = lines.peek() {
        let mut tokens = line.split_whitespace();
        let Some(first) = tokens.next() else {
            lines.next();
            continue;
        };
        if !first.starts_with(|c: char| c.is_ascii_alphabetic()) {
            break;
        }
        let key = first.to_ascii_lowercase();
        let Some(slot) = KEYS.iter().position(|k| *k == key) else {
            // a non-numeric body token reads as a header line here
            if header.iter().take(5).all(Option::is_some) {
                break;
            }
            return Err(AsciiError::MalformedHeader(format!(
                "unknown key {first:?}"
            )));
        };
        if header[slot].is_some() {
            return Err(AsciiError::MalformedHeader(format!(
                "duplicate key {first:?}"
            )));
        }
        header[slot] = Some(header_number(first, tokens.next())?);
        if let Some(extra) = tokens.next() {
            return Err(AsciiError::MalformedHeader(format!(
                "trailing {extra:?} after {first}"
            )));
        }
        lines.next();
    }
    let get = |i: usize| {
        header[i].ok_or_else(|| AsciiError::MalformedHeader(format!("missing key {}", KEYS[i])))
    };
    let ncols = header_count("ncols", get(0)?)?;
    let nrows = header_count("nrows", get(1)?)?;
    let meta = GridMeta::new(
        ncols,
        nrows,
        get(2)?,
        get(3)?,
        get(4)?,
        header[5].unwrap_or(DEFAULT_NODATA),
    )?;

    let expected = meta.cell_count();
    let mut values = Vec::with_capacity(expected);
    for line in lines {
        for token in line.split_whitespace() {
            let index = values.len();
            let v = token
                .parse::<f64>()
                .map_err(|_| AsciiError::NonNumericCell {
                    index,
                    token: token.to_string(),
                })?;
            values.push(v);
        }
    }
    if values.len() != expected {
        return Err(AsciiError::DimensionMismatch {
            expected,
            found: values.len(),
        });
    }
    Ok(Raster::new(meta, values)?)
}

/// `%.17g`: 17 significant digits, trailing zeros dropped.
pub fn format_g17(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let fixed = format!("{v:.*}", (16 - exp) as usize);
        strip_zeros(&fixed).to_string()
    } else {
        format!("{}e{exp}", strip_zeros(mantissa))
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_ascii_grid(r: &Raster) -> String {
    let m = r.meta();
    let mut out = String::with_capacity(96 + r.len() * 20);
    let _ = writeln!(out, "ncols {}", m.ncols);
    let _ = writeln!(out, "nrows {}", m.nrows);
    let _ = writeln!(out, "xllcorner {}", format_g17(m.xllcorner));
    let _ = writeln!(out, "yllcorner {}", format_g17(m.yllcorner));
    let _ = writeln!(out, "cellsize {}", format_g17(m.cellsize));
    let _ = writeln!(out, "NODATA_value {}", format_g17(m.nodata_value));
    for row in r.values().chunks(m.ncols) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&format_g17(*v));
        }
        out.push('\n');
    }
    out
}

pub fn read_ascii(path: &Path) -> Result<Raster> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    parse_ascii_grid(&text).map_err(|source| Error::Ascii {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_ascii(path: &Path, r: &Raster) -> Result<()> {
    fs::write(path, write_ascii_grid(r)).map_err(Error::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 5\nNODATA_value -9999\n";

    #[test]
    fn parses_and_flags_nodata() {
        let r = parse_ascii_grid(&format!("{HEADER}0.2 0.8\n")).unwrap();
        assert_eq!(r.values(), &[0.2, 0.8]);
        let r = parse_ascii_grid(&format!("{HEADER}0.2 -9999\n")).unwrap();
        assert!(r.is_valid(0) && !r.is_valid(1));
    }

    #[test]
    fn dimension_and_token_errors() {
        let err = parse_ascii_grid(&format!("{HEADER}0.2\n")).unwrap_err();
        assert_eq!(
            err,
            AsciiError::DimensionMismatch {
                expected: 2,
                found: 1
            }
        );
        let err = parse_ascii_grid(&format!("{HEADER}0.2 x\n")).unwrap_err();
        assert!(matches!(err, AsciiError::NonNumericCell { index: 1, .. }));
    }

    #[test]
    fn header_rules() {
        let upper = "NCOLS 1\nNROWS 1\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 1\n7\n";
        let r = parse_ascii_grid(upper).unwrap();
        assert_eq!(r.meta().nodata_value, DEFAULT_NODATA);
        let dup = "ncols 1\nncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n7\n";
        assert!(matches!(
            parse_ascii_grid(dup),
            Err(AsciiError::MalformedHeader(_))
        ));
        let missing = "ncols 1\nnrows 1\nxllcorner 0\ncellsize 1\n7\n";
        assert!(matches!(
            parse_ascii_grid(missing),
            Err(AsciiError::MalformedHeader(_))
        ));
    }

    #[test]
    fn g17_formatting() {
        assert_eq!(format_g17(0.1), "0.10000000000000001");
        assert_eq!(format_g17(-9999.0), "-9999");
        assert_eq!(format_g17(5.0), "5");
        assert_eq!(format_g17(1e-5), "1.0000000000000001e-5");
        assert_eq!(format_g17(1e300), "1.0000000000000001e300");
        assert_eq!(format_g17(0.5), "0.5");
        assert_eq!("0.10000000000000001".parse::<f64>().unwrap(), 0.1);
    }
}
