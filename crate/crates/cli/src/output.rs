use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde_json::{Map, Value};

use crate::failure::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    JsonLines,
}

/// One stdout record: ordered `(column, value)` pairs.
pub type Record = Vec<(&'static str, Value)>;

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => format!("{x:.6}"),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

pub fn emit(format: Format, records: &[Record]) {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match format {
        Format::JsonLines => {
            for r in records {
                let obj: Map<String, Value> = r.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
                let _ = writeln!(out, "{}", Value::Object(obj));
            }
        }
        Format::Table => {
            let Some(first) = records.first() else {
                return;
            };
            let headers: Vec<&str> = first.iter().map(|(k, _)| *k).collect();
            let rows: Vec<Vec<String>> = records.iter().map(|r| r.iter().map(|(_, v)| cell(v)).collect()).collect();
            let widths: Vec<usize> = (0..headers.len())
                .map(|c| rows.iter().map(|r| r[c].len()).chain([headers[c].len()]).max().unwrap_or(0))
                .collect();
            let line = |cells: Vec<&str>| {
                cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:<w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
                    .trim_end()
                    .to_string()
            };
            let _ = writeln!(out, "{}", line(headers.clone()));
            for r in &rows {
                let _ = writeln!(out, "{}", line(r.iter().map(String::as_str).collect()));
            }
        }
    }
}

/// Write via a temporary sibling and rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Delimited text with one header row.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| crate::failure::Failure::Runtime(e.to_string()))
}

/// Shortest decimal that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
