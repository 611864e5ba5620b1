//! Fixed-width tables from a study's CSV outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::format::fmt_g;
use crate::study::{SUMMARY_HEADER, VALUES_HEADER};

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("{path}: header must be `{expected}`")]
    Header { path: PathBuf, expected: String },
    #[error("{path}: row {row}: {reason}")]
    Row { path: PathBuf, row: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryLine {
    pub method: String,
    pub metric: String,
    pub bias: f64,
    pub std: f64,
    pub mean_se: f64,
    pub type1_rate: Option<f64>,
    pub mean_estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueLine {
    pub method: String,
    pub rep: usize,
    pub treatment_value: f64,
    pub control_value: f64,
}

/// Rows of a CSV file with a fixed header. Row numbers in errors count the
/// header as row 1.
fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<(usize, Vec<String>)>, ReportError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| ReportError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    let found = reader.headers().map_err(|e| ReportError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if found.iter().collect::<Vec<_>>() != header {
        return Err(ReportError::Header {
            path: path.to_path_buf(),
            expected: header.join(","),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| ReportError::Row {
            path: path.to_path_buf(),
            row,
            reason: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(ReportError::Row {
                path: path.to_path_buf(),
                row,
                reason: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        rows.push((row, record.iter().map(str::to_string).collect()));
    }
    Ok(rows)
}

fn number(path: &Path, row: usize, column: &str, cell: &str) -> Result<f64, ReportError> {
    let bad = |reason: String| ReportError::Row {
        path: path.to_path_buf(),
        row,
        reason,
    };
    let v: f64 = cell
        .parse()
        .map_err(|_| bad(format!("column `{column}`: `{cell}` is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(format!("column `{column}`: non-finite value `{cell}`")))
    }
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryLine>, ReportError> {
    read_rows(path, &SUMMARY_HEADER)?
        .into_iter()
        .map(|(row, f)| {
            Ok(SummaryLine {
                method: f[0].clone(),
                metric: f[1].clone(),
                bias: number(path, row, "bias", &f[2])?,
                std: number(path, row, "std", &f[3])?,
                mean_se: number(path, row, "mean_se", &f[4])?,
                type1_rate: if f[5].is_empty() {
                    None
                } else {
                    Some(number(path, row, "type1_rate", &f[5])?)
                },
                mean_estimate: number(path, row, "mean_estimate", &f[6])?,
            })
        })
        .collect()
}

pub fn read_values(path: &Path) -> Result<Vec<ValueLine>, ReportError> {
    read_rows(path, &VALUES_HEADER)?
        .into_iter()
        .map(|(row, f)| {
            Ok(ValueLine {
                method: f[0].clone(),
                rep: f[1].parse().map_err(|_| ReportError::Row {
                    path: path.to_path_buf(),
                    row,
                    reason: format!("column `rep`: `{}` is not an index", f[1]),
                })?,
                treatment_value: number(path, row, "treatment_value", &f[2])?,
                control_value: number(path, row, "control_value", &f[3])?,
            })
        })
        .collect()
}

fn mean_sem(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Bias / STD / SE (and type-I rate when present) per metric, then the
/// experimentation values when `values` is given.
pub fn render(summary: &[SummaryLine], values: Option<&[ValueLine]>) -> String {
    let mut out = String::new();
    let mut metrics: Vec<&str> = summary.iter().map(|s| s.metric.as_str()).collect();
    metrics.sort();
    metrics.dedup();
    let aa = summary.iter().any(|s| s.type1_rate.is_some());
    for metric in metrics {
        let _ = writeln!(out, "{metric}");
        let _ = write!(out, "{:<12}{:>14}{:>14}{:>14}", "method", "bias", "std", "se");
        if aa {
            let _ = write!(out, "{:>14}", "type1_rate");
        }
        let _ = writeln!(out, "{:>14}", "mean_est");
        for s in summary.iter().filter(|s| s.metric == metric) {
            let _ = write!(
                out,
                "{:<12}{:>14}{:>14}{:>14}",
                s.method,
                fmt_g(s.bias),
                fmt_g(s.std),
                fmt_g(s.mean_se)
            );
            if aa {
                let _ = write!(out, "{:>14}", s.type1_rate.map(fmt_g).unwrap_or_default());
            }
            let _ = writeln!(out, "{:>14}", fmt_g(s.mean_estimate));
        }
        out.push('\n');
    }
    if let Some(values) = values {
        let _ = writeln!(out, "experimentation values");
        let _ = writeln!(
            out,
            "{:<12}{:>14}{:>12}{:>14}{:>12}",
            "method", "treatment", "sem", "control", "sem"
        );
        let mut methods: Vec<&str> = values.iter().map(|v| v.method.as_str()).collect();
        methods.sort();
        methods.dedup();
        for m in methods {
            let t: Vec<f64> = values
                .iter()
                .filter(|v| v.method == m)
                .map(|v| v.treatment_value)
                .collect();
            let c: Vec<f64> = values
                .iter()
                .filter(|v| v.method == m)
                .map(|v| v.control_value)
                .collect();
            let (tm, ts) = mean_sem(&t);
            let (cm, cs) = mean_sem(&c);
            let _ = writeln!(
                out,
                "{:<12}{:>14}{:>12}{:>14}{:>12}",
                m,
                fmt_g(tm),
                fmt_g(ts),
                fmt_g(cm),
                fmt_g(cs)
            );
        }
    }
    out
}

/// Render the tables of the study in `dir`.
pub fn report_dir(dir: &Path) -> Result<String, ReportError> {
    let summary = read_summary(&dir.join("summary.csv"))?;
    let values_path = dir.join("values.csv");
    let values = if values_path.exists() {
        Some(read_values(&values_path)?)
    } else {
        None
    };
    Ok(render(&summary, values.as_deref()))
}
