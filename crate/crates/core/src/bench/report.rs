//! Tabular results with CSV and JSON output.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 9] = [
    "solver",
    "param",
    "final_error",
    "nfe",
    "wall_time_ns",
    "inner_iter_total",
    "accepted",
    "rejected",
    "status",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub solver: String,
    /// Step size for fixed-step solvers, tolerance for adaptive ones, grid
    /// size for backend comparisons.
    pub param: f64,
    /// Absent when the solve failed.
    pub final_error: Option<f64>,
    pub nfe: u64,
    pub wall_time_ns: u64,
    pub inner_iter_total: u64,
    pub accepted: u64,
    pub rejected: u64,
    /// `ok` or a short failure tag.
    pub status: String,
}

impl Row {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub benchmark: String,
    pub seed: u64,
    pub grid_size: usize,
    pub metric: String,
    /// SHA-256 of the canonical JSON form of the sweep that produced the report.
    pub config_hash: String,
    pub artifact_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metadata: Metadata,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl ReportFormat {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidConfig(format!("unknown report format '{other}'"))),
        }
    }
}

fn csv_error(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    }
}

pub fn write_csv(report: &Report, out: impl Write) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for row in &report.rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()
}

pub fn write_json(report: &Report, mut out: impl Write) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, report)?;
    writeln!(out)
}

pub fn write_report(report: &Report, format: ReportFormat, out: impl Write) -> std::io::Result<()> {
    match format {
        ReportFormat::Csv => write_csv(report, out),
        ReportFormat::Json => write_json(report, out),
    }
}

/// Write `report` to `path`; I/O failures carry the path.
pub fn emit_report(report: &Report, format: ReportFormat, path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut buf = std::io::BufWriter::new(file);
    write_report(report, format, &mut buf).map_err(io)?;
    buf.flush().map_err(io)
}

pub fn read_json_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        what: path.display().to_string(),
        message: e.to_string(),
    })
}
