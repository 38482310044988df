use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::run::{SweepReport, SweepRow};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(invalid(format!("unknown report format `{s}` (expected csv or json)"))),
        }
    }
}

pub const SUMMARY_COLUMNS: [&str; 12] = [
    "label",
    "scheme",
    "macs",
    "acc_fp32",
    "acc_q",
    "qmse",
    "qce",
    "rel_drop",
    "seed",
    "config_hash",
    "dir",
    "error",
];

/// Flat view of a row; layer statistics live in per-configuration files.
#[derive(Debug, Serialize, Deserialize)]
struct SummaryRecord {
    label: String,
    scheme: String,
    macs: u64,
    acc_fp32: Option<f64>,
    acc_q: Option<f64>,
    qmse: Option<f64>,
    qce: Option<f64>,
    rel_drop: Option<f64>,
    seed: u64,
    config_hash: String,
    dir: String,
    error: Option<String>,
}

/// One configuration per row; a report without rows yields only the header.
pub fn write_summary_csv<W: Write>(report: &SweepReport, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for r in &report.rows {
        w.serialize(SummaryRecord {
            label: r.label.clone(),
            scheme: r.scheme.to_string(),
            macs: r.macs,
            acc_fp32: r.acc_fp32,
            acc_q: r.acc_q,
            qmse: r.qmse,
            qce: r.qce,
            rel_drop: r.rel_drop,
            seed: r.seed,
            config_hash: r.config_hash.clone(),
            dir: r.dir.clone(),
            error: r.error.clone(),
        })?;
    }
    w.flush().map_err(Error::from)
}

/// Parses a summary CSV back into rows (without layer statistics).
pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.deserialize::<SummaryRecord>() {
        let rec = rec?;
        rows.push(SweepRow {
            label: rec.label,
            scheme: rec.scheme.parse()?,
            macs: rec.macs,
            acc_fp32: rec.acc_fp32,
            acc_q: rec.acc_q,
            qmse: rec.qmse,
            qce: rec.qce,
            rel_drop: rec.rel_drop,
            seed: rec.seed,
            config_hash: rec.config_hash,
            dir: rec.dir,
            error: rec.error.filter(|e| !e.is_empty()),
            layers: Vec::new(),
        });
    }
    Ok(rows)
}

/// Writes `summary.csv` or `summary.json` (full detail, including layer
/// statistics) into `out_dir` and returns its path.
pub fn emit_report(report: &SweepReport, out_dir: &Path, format: ReportFormat) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = match format {
        ReportFormat::Csv => {
            let p = out_dir.join("summary.csv");
            write_summary_csv(report, std::fs::File::create(&p)?)?;
            p
        }
        ReportFormat::Json => {
            let p = out_dir.join("summary.json");
            std::fs::write(&p, serde_json::to_string_pretty(report)?)?;
            p
        }
    };
    Ok(path)
}
