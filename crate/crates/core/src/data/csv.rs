//! Text dataset format.
//!
//! ```text
//! # D=2 N=32 classes=2
//! # any further comment lines are ignored
//! 1,0.25,0.81,...
//! ```
//!
//! Each row is the integer label followed by `D * N` values, channel-major.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Dataset, SeqRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvOptions {
    /// Truncate or zero-pad every channel of every row to this length.
    pub fixed_length: Option<usize>,
}

fn parse_header(line: &str) -> Option<(usize, usize, usize)> {
    let rest = line.strip_prefix('#')?;
    let (mut d, mut n, mut c) = (None, None, None);
    for field in rest.split_whitespace() {
        let (key, value) = field.split_once('=')?;
        let value: usize = value.parse().ok()?;
        match key {
            "D" => d = Some(value),
            "N" => n = Some(value),
            "classes" => c = Some(value),
            _ => return None,
        }
    }
    Some((d?, n?, c?))
}

pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path, e))?
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let (dim, header_len, classes) = parse_header(header.trim())
        .ok_or_else(|| parse_err(1, format!("expected `# D=<d> N=<n> classes=<c>`, got `{header}`")))?;
    if dim == 0 || classes == 0 {
        return Err(parse_err(1, "D and classes must be positive".into()));
    }
    let length = options.fixed_length.unwrap_or(header_len);

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let label_text = fields.next().unwrap_or_default().trim();
        let label: usize = label_text
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad label `{label_text}`")))?;
        if label >= classes {
            return Err(parse_err(line_no, format!("label {label} >= classes {classes}")));
        }
        let raw = fields
            .map(|f| {
                let f = f.trim();
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line_no, format!("bad number `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;

        let values = if options.fixed_length.is_some() {
            if raw.len() % dim != 0 {
                return Err(parse_err(
                    line_no,
                    format!("{} values do not divide into {dim} channels", raw.len()),
                ));
            }
            let row_len = raw.len() / dim;
            let mut values = vec![0.0; dim * length];
            for c in 0..dim {
                let keep = row_len.min(length);
                values[c * length..c * length + keep]
                    .copy_from_slice(&raw[c * row_len..c * row_len + keep]);
            }
            values
        } else {
            if raw.len() != dim * length {
                return Err(parse_err(
                    line_no,
                    format!("expected {} values, got {}", dim * length, raw.len()),
                ));
            }
            raw
        };
        records.push(SeqRecord { values, label });
    }
    Dataset::new(dim, length, classes, records)
}

/// Write `ds` with its header line, then `comments` as `# ` lines.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>, comments: &[String]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "# D={} N={} classes={}", ds.dim, ds.length, ds.classes).map_err(io)?;
    for c in comments {
        writeln!(w, "# {c}").map_err(io)?;
    }
    for r in &ds.records {
        write!(w, "{}", r.label).map_err(io)?;
        for v in &r.values {
            // `Display` for f64 prints the shortest string that parses back exactly.
            write!(w, ",{v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}
