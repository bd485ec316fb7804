//! ESRI ASCII grid rasters.
//!
//! Text format: a header of `ncols`, `nrows`, `xllcorner`, `yllcorner`,
//! `cellsize` and `NODATA_value` lines followed by row-major values, first
//! data line = top row. Values are stored as f64; class layers carry
//! integer codes and are decoded by the scenario layer.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_NODATA: f64 = -9999.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub rows: u32,
    pub cols: u32,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata: f64,
    /// Row-major, `rows * cols` long, top row first.
    pub data: Vec<f64>,
}

impl Raster {
    pub fn filled(rows: u32, cols: u32, value: f64) -> Self {
        Raster {
            rows,
            cols,
            xllcorner: 0.0,
            yllcorner: 0.0,
            cellsize: 1000.0,
            nodata: DEFAULT_NODATA,
            data: vec![value; rows as usize * cols as usize],
        }
    }

    pub fn n_cells(&self) -> u32 {
        self.rows * self.cols
    }

    #[inline]
    pub fn get(&self, cell: u32) -> f64 {
        self.data[cell as usize]
    }

    #[inline]
    pub fn is_nodata(&self, cell: u32) -> bool {
        self.data[cell as usize] == self.nodata
    }

    /// Value at `cell`, or None when it equals the nodata sentinel.
    #[inline]
    pub fn value(&self, cell: u32) -> Option<f64> {
        let v = self.data[cell as usize];
        if v == self.nodata {
            None
        } else {
            Some(v)
        }
    }

    pub fn read_ascii(path: &Path) -> Result<Raster> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        parse_ascii(&text, &path.display().to_string())
    }

    pub fn write_ascii(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_ascii()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncols {}", self.cols);
        let _ = writeln!(out, "nrows {}", self.rows);
        let _ = writeln!(out, "xllcorner {}", self.xllcorner);
        let _ = writeln!(out, "yllcorner {}", self.yllcorner);
        let _ = writeln!(out, "cellsize {}", self.cellsize);
        let _ = writeln!(out, "NODATA_value {}", self.nodata);
        for r in 0..self.rows as usize {
            let row = &self.data[r * self.cols as usize..(r + 1) * self.cols as usize];
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }
}

fn parse_ascii(text: &str, path: &str) -> Result<Raster> {
    let mut ncols: Option<u32> = None;
    let mut nrows: Option<u32> = None;
    let mut xllcorner = 0.0;
    let mut yllcorner = 0.0;
    let mut cellsize: Option<f64> = None;
    let mut nodata = DEFAULT_NODATA;
    let mut data: Vec<f64> = Vec::new();
    let mut in_header = true;

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno as u64 + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let first = tokens.next().unwrap();
        if in_header && first.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            let value = tokens
                .next()
                .ok_or_else(|| Error::parse(path, lineno, format!("header line '{first}' has no value")))?;
            if tokens.next().is_some() {
                return Err(Error::parse(path, lineno, "trailing tokens after header value"));
            }
            match first.to_ascii_lowercase().as_str() {
                "ncols" => ncols = Some(parse_dim(path, lineno, value)?),
                "nrows" => nrows = Some(parse_dim(path, lineno, value)?),
                "xllcorner" => xllcorner = parse_num(path, lineno, value)?,
                "yllcorner" => yllcorner = parse_num(path, lineno, value)?,
                "cellsize" => cellsize = Some(parse_num(path, lineno, value)?),
                "nodata_value" => nodata = parse_num(path, lineno, value)?,
                other => {
                    return Err(Error::parse(path, lineno, format!("unknown header key '{other}'")));
                }
            }
            continue;
        }
        in_header = false;
        data.push(parse_num(path, lineno, first)?);
        for token in tokens {
            data.push(parse_num(path, lineno, token)?);
        }
    }

    let cols = ncols.ok_or_else(|| Error::parse(path, 0, "missing ncols header"))?;
    let rows = nrows.ok_or_else(|| Error::parse(path, 0, "missing nrows header"))?;
    let cellsize = cellsize.ok_or_else(|| Error::parse(path, 0, "missing cellsize header"))?;
    let expected = rows as usize * cols as usize;
    if data.len() != expected {
        return Err(Error::parse(
            path,
            0,
            format!("expected {expected} values for {rows}x{cols} grid, found {}", data.len()),
        ));
    }
    Ok(Raster {
        rows,
        cols,
        xllcorner,
        yllcorner,
        cellsize,
        nodata,
        data,
    })
}

fn parse_dim(path: &str, line: u64, token: &str) -> Result<u32> {
    token
        .parse::<u32>()
        .ok()
        .filter(|&v| v >= 1)
        .ok_or_else(|| Error::parse(path, line, format!("invalid dimension '{token}'")))
}

fn parse_num(path: &str, line: u64, token: &str) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid number '{token}'")))?;
    if v.is_nan() {
        return Err(Error::parse(path, line, "NaN is not a valid raster value"));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1000\nNODATA_value -9999\n1 2 3\n4 -9999 6\n";

    #[test]
    fn parses_minimal_grid() {
        let r = parse_ascii(SAMPLE, "t.asc").unwrap();
        assert_eq!((r.rows, r.cols), (2, 3));
        assert_eq!(r.get(0), 1.0);
        assert!(r.is_nodata(4));
        assert_eq!(r.value(5), Some(6.0));
        assert_eq!(r.value(4), None);
    }

    #[test]
    fn roundtrips_exactly() {
        let r = parse_ascii(SAMPLE, "t.asc").unwrap();
        let text = r.to_ascii();
        let back = parse_ascii(&text, "t.asc").unwrap();
        assert_eq!(r, back);
        assert_eq!(text, parse_ascii(&text, "t.asc").unwrap().to_ascii());
    }

    #[test]
    fn missing_ncols_is_an_error() {
        let text = SAMPLE.replace("ncols 3\n", "");
        let err = parse_ascii(&text, "bad.asc").unwrap_err();
        assert!(err.to_string().contains("bad.asc"));
        assert!(err.to_string().contains("ncols"));
    }

    #[test]
    fn wrong_value_count_is_an_error() {
        let text = SAMPLE.replace("4 -9999 6\n", "4 -9999\n");
        let err = parse_ascii(&text, "bad.asc").unwrap_err();
        assert!(err.to_string().contains("expected 6 values"));
    }

    #[test]
    fn bad_token_reports_line() {
        let text = SAMPLE.replace("6", "six");
        let err = parse_ascii(&text, "bad.asc").unwrap_err();
        assert!(err.to_string().contains("bad.asc:8"));
    }

    #[test]
    fn values_may_wrap_across_lines() {
        let text = "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -1\n1 2\n3 4\n5 6\n";
        let r = parse_ascii(text, "t.asc").unwrap();
        assert_eq!(r.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }
}
