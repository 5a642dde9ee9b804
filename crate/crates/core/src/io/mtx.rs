//! MatrixMarket `coordinate real general` (sparse samples) and
//! `array real general` (dense factor blocks).
//!
//! Indices are 1-based on disk. Values are written in Rust's shortest
//! round-trip form, so `read(write(S)) == S` bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sparse::SampledMatrix;

const BANNER: &str = "%%MatrixMarket";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Enumerate<std::io::Lines<BufReader<File>>>,
}

impl<'a> Lines<'a> {
    fn open(path: &'a Path) -> Result<Self> {
        let file = File::open(path)?;
        Ok(Self {
            path,
            inner: BufReader::new(file).lines().enumerate(),
        })
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    /// Next non-comment, non-blank line with its 1-based number.
    fn next_data(&mut self) -> Result<Option<(usize, String)>> {
        for (k, line) in self.inner.by_ref() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('%') {
                continue;
            }
            return Ok(Some((k + 1, trimmed.to_string())));
        }
        Ok(None)
    }

    fn header(&mut self) -> Result<Layout> {
        let (_, first) = match self.inner.next() {
            Some((k, line)) => (k, line?),
            None => return Err(self.err(1, "empty file")),
        };
        let tokens: Vec<String> = first.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
        if tokens.len() != 5 || tokens[0] != BANNER.to_ascii_lowercase() || tokens[1] != "matrix" {
            return Err(self.err(1, format!("expected a '{BANNER} matrix ...' header, found {first:?}")));
        }
        let layout = match tokens[2].as_str() {
            "coordinate" => Layout::Coordinate,
            "array" => Layout::Array,
            other => return Err(self.err(1, format!("unknown layout {other:?}"))),
        };
        if tokens[3] != "real" && tokens[3] != "integer" {
            return Err(self.err(1, format!("field {:?} not supported, expected real", tokens[3])));
        }
        if tokens[4] != "general" {
            return Err(self.err(1, format!("symmetry {:?} not supported, expected general", tokens[4])));
        }
        Ok(layout)
    }
}

fn parse_usize(lines: &Lines<'_>, line: usize, tok: Option<&str>, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| lines.err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| lines.err(line, format!("invalid {what} {tok:?}")))
}

fn parse_f64(lines: &Lines<'_>, line: usize, tok: Option<&str>) -> Result<f64> {
    let tok = tok.ok_or_else(|| lines.err(line, "missing value"))?;
    let v: f64 = tok
        .parse()
        .map_err(|_| lines.err(line, format!("invalid value {tok:?}")))?;
    if !v.is_finite() {
        return Err(lines.err(line, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

/// Reads a `coordinate real general` file into a [`SampledMatrix`].
pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<SampledMatrix> {
    let path = path.as_ref();
    let mut lines = Lines::open(path)?;
    if lines.header()? != Layout::Coordinate {
        return Err(lines.err(1, "expected coordinate layout for sampled entries"));
    }
    let (size_line, size) = lines.next_data()?.ok_or_else(|| lines.err(2, "missing size line"))?;
    let mut it = size.split_whitespace();
    let m = parse_usize(&lines, size_line, it.next(), "row count")?;
    let n = parse_usize(&lines, size_line, it.next(), "column count")?;
    let nnz = parse_usize(&lines, size_line, it.next(), "entry count")?;
    if m == 0 || n == 0 || nnz == 0 {
        return Err(lines.err(size_line, "matrix must have rows, columns and at least one entry"));
    }

    let mut entries = Vec::with_capacity(nnz);
    let mut line_of = Vec::with_capacity(nnz);
    while let Some((ln, text)) = lines.next_data()? {
        if entries.len() == nnz {
            return Err(lines.err(ln, format!("more than the declared {nnz} entries")));
        }
        let mut it = text.split_whitespace();
        let i = parse_usize(&lines, ln, it.next(), "row index")?;
        let j = parse_usize(&lines, ln, it.next(), "column index")?;
        let v = parse_f64(&lines, ln, it.next())?;
        if i == 0 || j == 0 || i > m || j > n {
            return Err(lines.err(ln, format!("index ({i}, {j}) outside 1..={m} x 1..={n}")));
        }
        entries.push((i - 1, j - 1, v));
        line_of.push(ln);
    }
    if entries.len() != nnz {
        return Err(lines.err(0, format!("declared {nnz} entries, found {}", entries.len())));
    }

    let mut order: Vec<usize> = (0..nnz).collect();
    order.sort_unstable_by_key(|&e| (entries[e].0, entries[e].1));
    if let Some(w) = order
        .windows(2)
        .find(|w| (entries[w[0]].0, entries[w[0]].1) == (entries[w[1]].0, entries[w[1]].1))
    {
        let (i, j, _) = entries[w[1]];
        return Err(lines.err(
            line_of[w[1]].max(line_of[w[0]]),
            format!("duplicate entry ({}, {})", i + 1, j + 1),
        ));
    }
    SampledMatrix::from_triplets(m, n, entries)
}

/// Writes sampled entries as `coordinate real general`, row-major.
pub fn write_matrix_market(s: &SampledMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{BANNER} matrix coordinate real general")?;
    writeln!(w, "{} {} {}", s.nrows(), s.ncols(), s.nnz())?;
    for (i, j, v) in s.triplets() {
        writeln!(w, "{} {} {:?}", i + 1, j + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a dense block as `array real general` (column-major values).
pub fn write_dense_array(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{BANNER} matrix array real general")?;
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for v in m.iter() {
        writeln!(w, "{v:?}")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a vector as an `n x 1` array.
pub fn write_vector_array(values: &[f64], path: impl AsRef<Path>) -> Result<()> {
    write_dense_array(&DMatrix::from_column_slice(values.len(), 1, values), path)
}

/// Reads an `array real general` file. Zero-column arrays are accepted.
pub fn read_dense_array(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut lines = Lines::open(path)?;
    if lines.header()? != Layout::Array {
        return Err(lines.err(1, "expected array layout"));
    }
    let (size_line, size) = lines.next_data()?.ok_or_else(|| lines.err(2, "missing size line"))?;
    let mut it = size.split_whitespace();
    let m = parse_usize(&lines, size_line, it.next(), "row count")?;
    let n = parse_usize(&lines, size_line, it.next(), "column count")?;
    let mut values = Vec::with_capacity(m * n);
    while let Some((ln, text)) = lines.next_data()? {
        if values.len() == m * n {
            return Err(lines.err(ln, format!("more than the declared {} values", m * n)));
        }
        values.push(parse_f64(&lines, ln, Some(text.as_str()))?);
    }
    if values.len() != m * n {
        return Err(lines.err(0, format!("declared {} values, found {}", m * n, values.len())));
    }
    Ok(DMatrix::from_vec(m, n, values))
}
