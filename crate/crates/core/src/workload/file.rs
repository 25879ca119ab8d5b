//! Plain-text workload format, one operation per line:
//!
//! ```text
//! I key value
//! U key value
//! D key
//! P key
//! S low high
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Keys and values may
//! not contain whitespace.

use std::io::{BufRead, Write};

use super::Operation;
use crate::error::{Error, Result};

impl Operation {
    pub fn to_line(&self) -> String {
        let s = |b: &[u8]| String::from_utf8_lossy(b).into_owned();
        match self {
            Operation::Insert { key, value } => format!("I {} {}", s(key), s(value)),
            Operation::Update { key, value } => format!("U {} {}", s(key), s(value)),
            Operation::Delete { key } => format!("D {}", s(key)),
            Operation::PointLookup { key } => format!("P {}", s(key)),
            Operation::RangeLookup { low, high } => format!("S {} {}", s(low), s(high)),
        }
    }
}

pub fn write_workload<'a, W: Write>(mut out: W, ops: impl IntoIterator<Item = &'a Operation>) -> Result<()> {
    for op in ops {
        writeln!(out, "{}", op.to_line())?;
    }
    out.flush()?;
    Ok(())
}

/// Parses one line; `Ok(None)` for blanks and comments.
pub fn parse_line(line: &str, number: u64) -> Result<Option<Operation>> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    let err = |reason: String| Error::Parse { line: number as usize, reason };
    let fields: Vec<&str> = trimmed.split_whitespace().collect();
    let want = |n: usize| -> Result<()> {
        if fields.len() == n {
            Ok(())
        } else {
            Err(err(format!("'{}' takes {} fields, found {}", fields[0], n - 1, fields.len() - 1)))
        }
    };
    let b = |i: usize| fields[i].as_bytes().to_vec();
    let op = match fields[0] {
        "I" => {
            want(3)?;
            Operation::Insert { key: b(1), value: b(2) }
        }
        "U" => {
            want(3)?;
            Operation::Update { key: b(1), value: b(2) }
        }
        "D" => {
            want(2)?;
            Operation::Delete { key: b(1) }
        }
        "P" => {
            want(2)?;
            Operation::PointLookup { key: b(1) }
        }
        "S" => {
            want(3)?;
            if fields[1] > fields[2] {
                return Err(err(format!("range low '{}' exceeds high '{}'", fields[1], fields[2])));
            }
            Operation::RangeLookup { low: b(1), high: b(2) }
        }
        other => return Err(err(format!("unknown operation '{other}'"))),
    };
    Ok(Some(op))
}

/// Streams operations from a reader without loading the whole file.
pub struct WorkloadReader<R> {
    reader: R,
    line: String,
    number: u64,
}

impl<R: BufRead> WorkloadReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            reader,
            line: String::new(),
            number: 0,
        }
    }
}

impl<R: BufRead> Iterator for WorkloadReader<R> {
    type Item = Result<Operation>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line.clear();
            self.number += 1;
            match self.reader.read_line(&mut self.line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            match parse_line(&self.line, self.number) {
                Ok(None) => continue,
                Ok(Some(op)) => return Some(Ok(op)),
                Err(e) => return Some(Err(e)),
            }
        }
    }
}
