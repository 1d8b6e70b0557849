//! Loading of the CSV and JSON input files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::dsl::{ParseError, SelectionRule};
use crate::model::{ContextProfile, DefectRecord, HistoryRecord, ModelError, PartMetrics, Phase};
use crate::monitor::{Bounds, InspectionMeta, MonitorConfig, MonitorConfigError, ThresholdSource};
use crate::scalar::Scalar;

pub const DEFECTS_HEADER: [&str; 4] = ["part_id", "phase", "defect_type", "severity"];
pub const METRICS_HEADER: [&str; 3] = ["part_id", "metric", "value"];
pub const HISTORY_HEADER: [&str; 3] = ["part_id", "release_id", "defect_count"];

#[derive(Debug, Error)]
pub enum InputError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    Header {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}:{line}: {message}")]
    Row {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error("{path}: rule {rule_id:?}: {source}")]
    Rule {
        path: PathBuf,
        rule_id: String,
        source: ParseError,
    },
    #[error("{path}: {source}")]
    Monitor {
        path: PathBuf,
        source: MonitorConfigError,
    },
}

fn read(path: &Path) -> Result<String, InputError> {
    fs::read_to_string(path).map_err(|source| InputError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a comma-separated file with an exact header; every row must have
/// the header's column count. Returns (line number, trimmed cells).
fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<(u64, Vec<String>)>, InputError> {
    let text = read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found = reader
        .headers()
        .map_err(|e| InputError::Row {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(InputError::Header {
            path: path.to_path_buf(),
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| InputError::Row {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: match e.kind() {
                csv::ErrorKind::UnequalLengths {
                    expected_len, len, ..
                } => {
                    format!("expected {expected_len} columns, found {len}")
                }
                _ => e.to_string(),
            },
        })?;
        let line = record.position().map_or(0, |p| p.line());
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok(rows)
}

fn row_err(path: &Path, line: u64, message: impl std::fmt::Display) -> InputError {
    InputError::Row {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    }
}

fn opt(cell: &str) -> Option<&str> {
    (!cell.is_empty()).then_some(cell)
}

pub fn load_defects(path: &Path) -> Result<Vec<DefectRecord>, InputError> {
    read_rows(path, &DEFECTS_HEADER)?
        .into_iter()
        .map(|(line, cells)| {
            let phase: Phase = cells[1]
                .parse()
                .map_err(|e: ModelError| row_err(path, line, e))?;
            DefectRecord::new(cells[0].as_str(), phase, opt(&cells[2]), opt(&cells[3]))
                .map_err(|e| row_err(path, line, e))
        })
        .collect()
}

/// Long-format metrics, grouped into one [`PartMetrics`] per part.
pub fn load_metrics<T: Scalar>(path: &Path) -> Result<Vec<PartMetrics<T>>, InputError> {
    let mut grouped: BTreeMap<String, BTreeMap<String, T>> = BTreeMap::new();
    for (line, cells) in read_rows(path, &METRICS_HEADER)? {
        let (part, metric, value) = (&cells[0], &cells[1], &cells[2]);
        if part.is_empty() {
            return Err(row_err(path, line, ModelError::EmptyPartId));
        }
        if metric.is_empty() {
            return Err(row_err(path, line, "metric name must not be empty"));
        }
        let value = T::parse_literal(value).ok_or_else(|| {
            row_err(
                path,
                line,
                format!("metric value {value:?} is not a finite number"),
            )
        })?;
        let entries = grouped.entry(part.clone()).or_default();
        if entries.insert(metric.clone(), value).is_some() {
            return Err(row_err(
                path,
                line,
                format!("duplicate metric {metric:?} for part {part:?}"),
            ));
        }
    }
    grouped
        .into_iter()
        .map(|(part, entries)| {
            PartMetrics::new(part, entries).map_err(|e| InputError::Json {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn load_history(path: &Path) -> Result<Vec<HistoryRecord>, InputError> {
    read_rows(path, &HISTORY_HEADER)?
        .into_iter()
        .map(|(line, cells)| {
            if cells[0].is_empty() || cells[1].is_empty() {
                return Err(row_err(
                    path,
                    line,
                    "part_id and release_id must not be empty",
                ));
            }
            let defect_count = cells[2].parse::<u64>().map_err(|_| {
                row_err(
                    path,
                    line,
                    format!("defect_count {:?} is not a non-negative integer", cells[2]),
                )
            })?;
            Ok(HistoryRecord {
                part_id: cells[0].clone(),
                release_id: cells[1].clone(),
                defect_count,
            })
        })
        .collect()
}

fn load_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D, InputError> {
    serde_json::from_str(&read(path)?).map_err(|e| InputError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// One entry of `rules.json`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RuleEntry {
    pub id: String,
    pub assumption_id: String,
    pub rule: String,
    #[serde(default)]
    pub context: ContextProfile,
}

pub fn load_rule_entries(path: &Path) -> Result<Vec<RuleEntry>, InputError> {
    load_json(path)
}

/// Parses every rule in `rules.json`; the first syntax error aborts.
pub fn load_rules<T: Scalar>(
    path: &Path,
) -> Result<Vec<(SelectionRule<T>, ContextProfile)>, InputError> {
    load_rule_entries(path)?
        .into_iter()
        .map(|entry| {
            let rule = SelectionRule::parse(entry.id.clone(), entry.assumption_id, &entry.rule)
                .map_err(|source| InputError::Rule {
                    path: path.to_path_buf(),
                    rule_id: entry.id,
                    source,
                })?;
            Ok((rule, entry.context))
        })
        .collect()
}

pub fn load_context(path: &Path) -> Result<ContextProfile, InputError> {
    load_json(path)
}

#[derive(Debug, Deserialize)]
struct MonitorFile {
    #[serde(default)]
    min_total_inspection_defects: Option<u64>,
    #[serde(default)]
    reading_rate_bounds: Option<[f64; 2]>,
    #[serde(default)]
    defects_per_kloc_bounds: Option<[f64; 2]>,
    #[serde(default)]
    source: Option<ThresholdSource>,
    #[serde(default)]
    inspection: Option<InspectionFile>,
}

#[derive(Debug, Deserialize)]
struct InspectionFile {
    inspected_loc: Option<f64>,
    inspection_hours: Option<f64>,
}

/// `monitor.json`: the check thresholds plus optional facts about the
/// inspection run under `inspection`.
pub fn load_monitor_config(
    path: &Path,
) -> Result<(MonitorConfig<f64>, Option<InspectionMeta<f64>>), InputError> {
    let file: MonitorFile = load_json(path)?;
    let bounds = |b: Option<[f64; 2]>| b.map(|[min, max]| Bounds::new(min, max));
    let config = MonitorConfig {
        min_total_inspection_defects: file.min_total_inspection_defects,
        reading_rate_bounds: bounds(file.reading_rate_bounds),
        defects_per_kloc_bounds: bounds(file.defects_per_kloc_bounds),
        source: file.source,
    };
    config.validate().map_err(|source| InputError::Monitor {
        path: path.to_path_buf(),
        source,
    })?;
    let meta = file.inspection.map(|i| InspectionMeta {
        inspected_loc: i.inspected_loc,
        inspection_hours: i.inspection_hours,
    });
    Ok((config, meta))
}
