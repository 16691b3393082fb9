//! CSV and JSONL output.
//!
//! Floats are written in their shortest round-trip decimal form; missing
//! optional values are empty CSV fields and `null` in JSONL.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

use super::run::{Row, RunRecord};
use super::sweep::SummaryRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl Format {
    /// Picks JSONL for `.jsonl` / `.ndjson` paths and CSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => Format::Jsonl,
            _ => Format::Csv,
        }
    }
}

pub const ROW_COLUMNS: [&str; 8] = [
    "step",
    "loss",
    "distance_to_optimum",
    "eta",
    "alpha",
    "beta3",
    "update_norm",
    "heldout_loss",
];

/// Shortest decimal that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn row_fields(row: &Row) -> Vec<String> {
    let mut out = vec![
        row.step.to_string(),
        format_float(row.loss),
        opt(row.distance_to_optimum),
        format_float(row.eta),
        format_float(row.alpha),
        format_float(row.beta3),
        format_float(row.update_norm),
        opt(row.heldout_loss),
    ];
    if let Some(p) = &row.params {
        out.extend(p.iter().map(|&v| format_float(v)));
    }
    out
}

pub fn record_csv_bytes(record: &RunRecord) -> Result<Vec<u8>> {
    let here = Path::new("<memory>");
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ROW_COLUMNS.iter().map(|s| s.to_string()).collect();
    if let Some(p) = record.rows.first().and_then(|r| r.params.as_ref()) {
        header.extend((0..p.len()).map(|i| format!("theta_{i}")));
    }
    w.write_record(&header).map_err(csv_err(here))?;
    for row in &record.rows {
        w.write_record(row_fields(row)).map_err(csv_err(here))?;
    }
    w.into_inner()
        .map_err(|e| Error::Io {
            path: here.to_path_buf(),
            source: e.into_error(),
        })
}

pub fn jsonl_bytes<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| Error::Io {
            path: Path::new("<memory>").to_path_buf(),
            source: e.into(),
        })?;
        out.push(b'\n');
    }
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))?;
    f.flush().map_err(io_err(path))
}

/// Writes the record's rows with a header line.
pub fn emit_csv(record: &RunRecord, path: &Path) -> Result<()> {
    write_file(path, &record_csv_bytes(record)?)
}

/// Writes one JSON object per row.
pub fn emit_jsonl(record: &RunRecord, path: &Path) -> Result<()> {
    write_file(path, &jsonl_bytes(&record.rows)?)
}

pub fn emit(record: &RunRecord, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Csv => emit_csv(record, path),
        Format::Jsonl => emit_jsonl(record, path),
    }
}

pub fn summary_csv_bytes(keys: &[String], summary: &[SummaryRow]) -> Result<Vec<u8>> {
    let here = Path::new("<memory>");
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["index".to_string()];
    header.extend(keys.iter().cloned());
    header.extend(["final_loss", "best_loss", "diverged"].map(String::from));
    w.write_record(&header).map_err(csv_err(here))?;
    for s in summary {
        let mut rec = vec![s.index.to_string()];
        rec.extend(s.assignments.iter().map(|(_, v)| v.clone()));
        rec.push(opt(s.final_loss));
        rec.push(opt(s.best_loss));
        rec.push(s.diverged.to_string());
        w.write_record(&rec).map_err(csv_err(here))?;
    }
    w.into_inner().map_err(|e| Error::Io {
        path: here.to_path_buf(),
        source: e.into_error(),
    })
}

pub fn emit_summary(keys: &[String], summary: &[SummaryRow], path: &Path, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Csv => summary_csv_bytes(keys, summary)?,
        Format::Jsonl => jsonl_bytes(summary)?,
    };
    write_file(path, &bytes)
}

/// `age,weight` table of an EMA weight profile.
pub fn emit_weights(weights: &[f64], path: &Path) -> Result<()> {
    write_file(path, &weights_csv_bytes(weights)?)
}

pub fn weights_csv_bytes(weights: &[f64]) -> Result<Vec<u8>> {
    let here = Path::new("<memory>");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["age", "weight"]).map_err(csv_err(here))?;
    for (age, &v) in weights.iter().enumerate() {
        w.write_record([age.to_string(), format_float(v)])
            .map_err(csv_err(here))?;
    }
    w.into_inner().map_err(|e| Error::Io {
        path: here.to_path_buf(),
        source: e.into_error(),
    })
}
