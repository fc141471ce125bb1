//! Result-file emission: CSV with a single `#`-prefixed metadata header
//! line (crate version, config hash, seed) and numbers at nine significant
//! digits. Writing is deterministic: given identical inputs the bytes are
//! identical regardless of thread count.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

/// Metadata stamped into every output file.
#[derive(Debug, Clone)]
pub struct RunMeta {
    pub config_hash: String,
    pub seed: u64,
}

impl RunMeta {
    pub fn header_line(&self) -> String {
        format!(
            "# eegbench v{} config_hash={} seed={}",
            crate::VERSION,
            self.config_hash,
            self.seed
        )
    }
}

/// Format with nine significant digits (`%.9g`-style: fixed point for
/// moderate exponents, scientific otherwise, trailing zeros trimmed).
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let s = if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        trim_zeros(&s)
    } else {
        let s = format!("{x:.8e}");
        // Normalise "1.00000000e5" style to a trimmed mantissa.
        match s.split_once('e') {
            Some((mantissa, exponent)) => format!("{}e{exponent}", trim_zeros(mantissa)),
            None => s,
        }
    };
    s
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0');
    t.trim_end_matches('.').to_string()
}

/// A CSV cell: either preformatted text or a number.
pub enum Cell {
    Text(String),
    Num(f64),
    Int(i64),
}

impl From<&str> for Cell {
    fn from(s: &str) -> Cell {
        Cell::Text(s.to_string())
    }
}
impl From<String> for Cell {
    fn from(s: String) -> Cell {
        Cell::Text(s)
    }
}
impl From<f64> for Cell {
    fn from(x: f64) -> Cell {
        Cell::Num(x)
    }
}
impl From<usize> for Cell {
    fn from(x: usize) -> Cell {
        Cell::Int(x as i64)
    }
}

/// Write a CSV file with the metadata header line, a column-name row, and
/// the given rows.
pub fn write_csv(
    path: &Path,
    meta: &RunMeta,
    columns: &[&str],
    rows: &[Vec<Cell>],
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&meta.header_line());
    out.push('\n');
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        let mut first = true;
        for cell in row {
            if !first {
                out.push(',');
            }
            first = false;
            match cell {
                Cell::Text(s) => {
                    if s.contains(',') || s.contains('"') {
                        let escaped = s.replace('"', "\"\"");
                        let _ = write!(out, "\"{escaped}\"");
                    } else {
                        out.push_str(s);
                    }
                }
                Cell::Num(x) => out.push_str(&fmt_g(*x)),
                Cell::Int(i) => {
                    let _ = write!(out, "{i}");
                }
            }
        }
        out.push('\n');
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read back a written CSV, returning (header map check, columns, rows).
pub fn read_csv(path: &Path) -> Result<(String, Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").to_string();
    let columns: Vec<String> = lines
        .next()
        .unwrap_or("")
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| split_csv_line(l))
        .collect();
    Ok((header, columns, rows))
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut cells = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if in_quotes && chars.peek() == Some(&'"') => {
                current.push('"');
                chars.next();
            }
            '"' => in_quotes = !in_quotes,
            ',' if !in_quotes => {
                cells.push(std::mem::take(&mut current));
            }
            other => current.push(other),
        }
    }
    cells.push(current);
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_g_nine_significant_digits() {
        assert_eq!(fmt_g(0.0), "0");
        assert_eq!(fmt_g(0.2), "0.2");
        assert_eq!(fmt_g(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_g(123456789.0), "123456789");
        assert_eq!(fmt_g(0.000123456789), "0.000123456789");
        assert_eq!(fmt_g(1.23456789e12), "1.23456789e12");
        assert_eq!(fmt_g(-0.25), "-0.25");
        assert_eq!(fmt_g(1e-7), "1e-7");
    }

    #[test]
    fn csv_roundtrip_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let meta = RunMeta {
            config_hash: "deadbeefdeadbeef".into(),
            seed: 42,
        };
        write_csv(
            &path,
            &meta,
            &["model", "acc"],
            &[
                vec![Cell::from("gbdt"), Cell::from(0.25)],
                vec![Cell::from("a,b"), Cell::from(1.0 / 3.0)],
            ],
        )
        .unwrap();
        let (header, columns, rows) = read_csv(&path).unwrap();
        assert!(header.contains("config_hash=deadbeefdeadbeef"));
        assert!(header.contains("seed=42"));
        assert_eq!(columns, vec!["model", "acc"]);
        assert_eq!(rows[0], vec!["gbdt", "0.25"]);
        assert_eq!(rows[1], vec!["a,b", "0.333333333"]);
    }

    #[test]
    fn writes_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let meta = RunMeta {
            config_hash: "h".into(),
            seed: 1,
        };
        let rows = vec![vec![Cell::from("x"), Cell::from(0.5)]];
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_csv(&p1, &meta, &["c1", "c2"], &rows).unwrap();
        write_csv(&p2, &meta, &["c1", "c2"], &rows).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
