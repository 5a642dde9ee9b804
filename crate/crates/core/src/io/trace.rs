//! Convergence traces as CSV and JSON.
//!
//! The CSV header is fixed by [`TRACE_CSV_COLUMNS`]; floats use the shortest
//! round-trip representation so a trace read back compares bit-exactly.
//! `test_mae` is left empty when no evaluation set was supplied.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::svt::IterationRecord;

/// Bumped whenever a column is added, removed or reinterpreted.
pub const TRACE_SCHEMA_VERSION: u32 = 1;

pub const TRACE_CSV_COLUMNS: [&str; 9] = [
    "iter",
    "rank",
    "residual",
    "eps_threshold",
    "train_mae",
    "sketch_ms",
    "total_ms",
    "sketch_rank",
    "test_mae",
];

#[derive(Serialize, Deserialize)]
struct TraceDocument {
    schema_version: u32,
    records: Vec<IterationRecord>,
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_trace_csv(records: &[IterationRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_CSV_COLUMNS)?;
    for r in records {
        w.write_record([
            r.iter.to_string(),
            r.rank.to_string(),
            f(r.residual),
            f(r.eps_threshold),
            f(r.train_mae),
            f(r.sketch_ms),
            f(r.total_ms),
            r.sketch_rank.to_string(),
            r.test_mae.map(f).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Vec<IterationRecord>> {
    let path = path.as_ref();
    let parse = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.iter().ne(TRACE_CSV_COLUMNS) {
        return Err(parse(
            1,
            format!("unexpected trace header {:?}", header.iter().collect::<Vec<_>>()),
        ));
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let int = |c: usize| {
            field(c)
                .parse::<usize>()
                .map_err(|_| parse(line, format!("bad {} {:?}", TRACE_CSV_COLUMNS[c], field(c))))
        };
        let real = |c: usize| {
            field(c)
                .parse::<f64>()
                .map_err(|_| parse(line, format!("bad {} {:?}", TRACE_CSV_COLUMNS[c], field(c))))
        };
        out.push(IterationRecord {
            iter: int(0)?,
            rank: int(1)?,
            residual: real(2)?,
            eps_threshold: real(3)?,
            train_mae: real(4)?,
            sketch_ms: real(5)?,
            total_ms: real(6)?,
            sketch_rank: int(7)?,
            test_mae: if field(8).is_empty() { None } else { Some(real(8)?) },
        });
    }
    Ok(out)
}

pub fn write_trace_json(records: &[IterationRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let doc = TraceDocument {
        schema_version: TRACE_SCHEMA_VERSION,
        records: records.to_vec(),
    };
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_trace_json(path: impl AsRef<Path>) -> Result<Vec<IterationRecord>> {
    let path = path.as_ref();
    let doc: TraceDocument = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if doc.schema_version != TRACE_SCHEMA_VERSION {
        return Err(Error::Unsupported {
            path: path.to_path_buf(),
            msg: format!(
                "trace schema version {} (expected {TRACE_SCHEMA_VERSION})",
                doc.schema_version
            ),
        });
    }
    Ok(doc.records)
}
