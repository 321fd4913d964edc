//! Trace CSV and JSON persistence.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::record::StepRecord;
use crate::agents::Phase;
use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 6] = ["t", "phase", "arm_i", "arm_j", "regret_inst", "regret_cum"];

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create_file(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

pub fn write_trace(path: &Path, steps: &[StepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    w.write_record(TRACE_HEADER)?;
    for s in steps {
        w.write_record([
            s.t.to_string(),
            s.phase.as_str().to_string(),
            s.arm_i.to_string(),
            s.arm_j.to_string(),
            fmt_f64(s.regret),
            fmt_f64(s.regret_cum),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Vec<StepRecord>> {
    let malformed = |reason: String| Error::MalformedTrace {
        path: path.to_path_buf(),
        reason,
    };
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(f));
    let header = r.headers()?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(malformed(format!("unexpected header {header:?}")));
    }
    let mut steps = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| {
            rec.get(k)
                .ok_or_else(|| malformed(format!("row {row}: missing column {k}")))
        };
        let parse_err = |k: usize| malformed(format!("row {row}: bad value in column {}", TRACE_HEADER[k]));
        steps.push(StepRecord {
            t: field(0)?.parse().map_err(|_| parse_err(0))?,
            phase: field(1)?.parse::<Phase>().map_err(|_| parse_err(1))?,
            arm_i: field(2)?.parse().map_err(|_| parse_err(2))?,
            arm_j: field(3)?.parse().map_err(|_| parse_err(3))?,
            regret: field(4)?.parse().map_err(|_| parse_err(4))?,
            regret_cum: field(5)?.parse().map_err(|_| parse_err(5))?,
        });
    }
    Ok(steps)
}
