//! Domain records and per-part statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Metric name for class length in lines of code.
pub const LOC: &str = "loc";
/// Metric name for mean method length in lines of code.
pub const MEAN_METHOD_LENGTH: &str = "mean_method_length";

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("part_id must not be empty")]
    EmptyPartId,
    #[error("unknown phase {0:?} (expected `inspection` or `test`)")]
    UnknownPhase(String),
    #[error("duplicate metrics for part {0:?}")]
    DuplicateMetrics(String),
    #[error("metric {metric:?} of part {part:?} is not a finite number")]
    NonFiniteMetric { part: String, metric: String },
    #[error("metric `loc` of part {0:?} must be positive")]
    NonPositiveLoc(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Inspection,
    Test,
}

impl FromStr for Phase {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inspection" => Ok(Phase::Inspection),
            "test" => Ok(Phase::Test),
            _ => Err(ModelError::UnknownPhase(s.to_string())),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Inspection => "inspection",
            Phase::Test => "test",
        })
    }
}

/// Trims and lowercases a severity or defect-type label; blank means absent.
pub fn normalize_label(label: &str) -> Option<String> {
    let label = label.trim();
    (!label.is_empty()).then(|| label.to_lowercase())
}

/// One observed defect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectRecord {
    pub part_id: String,
    pub phase: Phase,
    pub defect_type: Option<String>,
    pub severity: Option<String>,
}

impl DefectRecord {
    pub fn new(
        part_id: impl Into<String>,
        phase: Phase,
        defect_type: Option<&str>,
        severity: Option<&str>,
    ) -> Result<Self, ModelError> {
        let part_id = part_id.into().trim().to_string();
        if part_id.is_empty() {
            return Err(ModelError::EmptyPartId);
        }
        Ok(Self {
            part_id,
            phase,
            defect_type: defect_type.and_then(normalize_label),
            severity: severity.and_then(normalize_label),
        })
    }

    pub fn inspection(part_id: impl Into<String>) -> Self {
        Self::new(part_id, Phase::Inspection, None, None).expect("non-empty part id")
    }

    pub fn test(part_id: impl Into<String>) -> Self {
        Self::new(part_id, Phase::Test, None, None).expect("non-empty part id")
    }
}

/// Size and structure metrics of one part, keyed by metric name.
#[derive(Debug, Clone, PartialEq)]
pub struct PartMetrics<T> {
    pub part_id: String,
    pub entries: BTreeMap<String, T>,
}

impl<T: Scalar> PartMetrics<T> {
    pub fn new(
        part_id: impl Into<String>,
        entries: impl IntoIterator<Item = (String, T)>,
    ) -> Result<Self, ModelError> {
        let metrics = Self {
            part_id: part_id.into().trim().to_string(),
            entries: entries
                .into_iter()
                .map(|(k, v)| (k.trim().to_string(), v))
                .collect(),
        };
        metrics.validate()?;
        Ok(metrics)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.part_id.is_empty() {
            return Err(ModelError::EmptyPartId);
        }
        for (name, value) in &self.entries {
            if !value.is_finite() {
                return Err(ModelError::NonFiniteMetric {
                    part: self.part_id.clone(),
                    metric: name.clone(),
                });
            }
        }
        if let Some(loc) = self.entries.get(LOC) {
            if *loc <= T::zero() {
                return Err(ModelError::NonPositiveLoc(self.part_id.clone()));
            }
        }
        Ok(())
    }
}

/// Defects found in one part in one release.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub part_id: String,
    pub release_id: String,
    pub defect_count: u64,
}

/// Defect counts per defect type, split by phase.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TypeCounts {
    pub inspection: BTreeMap<String, u64>,
    pub test: BTreeMap<String, u64>,
}

/// Everything known about one part after ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct PartStats<T> {
    pub part_id: String,
    pub inspection_defect_content: u64,
    pub test_defect_content: u64,
    /// Inspection-phase defects per severity label.
    pub severity_counts: BTreeMap<String, u64>,
    pub type_counts: TypeCounts,
    /// Inspection defects per line of code; present only when `loc` is known.
    pub defect_density: Option<T>,
    pub metrics: BTreeMap<String, T>,
    /// Historical defect count per release id.
    pub history: BTreeMap<String, u64>,
}

impl<T: Scalar> PartStats<T> {
    fn empty(part_id: &str) -> Self {
        Self {
            part_id: part_id.to_string(),
            inspection_defect_content: 0,
            test_defect_content: 0,
            severity_counts: BTreeMap::new(),
            type_counts: TypeCounts::default(),
            defect_density: None,
            metrics: BTreeMap::new(),
            history: BTreeMap::new(),
        }
    }

    pub fn metric(&self, name: &str) -> Option<T> {
        self.metrics.get(name).copied()
    }

    pub fn loc(&self) -> Option<T> {
        self.metric(LOC)
    }

    pub fn mean_method_length(&self) -> Option<T> {
        self.metric(MEAN_METHOD_LENGTH)
    }

    /// Inspection defects with the given severity label (0 when none).
    pub fn severity_count(&self, severity: &str) -> u64 {
        normalize_label(severity)
            .and_then(|s| self.severity_counts.get(&s).copied())
            .unwrap_or(0)
    }

    /// Sum of historical defects over the `last` most recent releases, ordered
    /// by release id descending. `None` if fewer than `last` releases are on
    /// record for this part.
    pub fn history_defects(&self, last: usize) -> Option<u64> {
        if last == 0 || self.history.len() < last {
            return None;
        }
        Some(self.history.values().rev().take(last).sum())
    }
}

/// Per-part statistics keyed by part id.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsTable<T> {
    parts: BTreeMap<String, PartStats<T>>,
}

impl<T> Default for StatsTable<T> {
    fn default() -> Self {
        Self {
            parts: BTreeMap::new(),
        }
    }
}

impl<T: Scalar> StatsTable<T> {
    pub fn get(&self, part_id: &str) -> Option<&PartStats<T>> {
        self.parts.get(part_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PartStats<T>> {
        self.parts.values()
    }

    pub fn part_ids(&self) -> BTreeSet<String> {
        self.parts.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn total_inspection_defects(&self) -> u64 {
        self.iter().map(|p| p.inspection_defect_content).sum()
    }

    /// Test-phase defect count per part.
    pub fn test_defects(&self) -> BTreeMap<String, u64> {
        self.iter()
            .map(|p| (p.part_id.clone(), p.test_defect_content))
            .collect()
    }
}

impl<T: Scalar> FromIterator<PartStats<T>> for StatsTable<T> {
    fn from_iter<I: IntoIterator<Item = PartStats<T>>>(iter: I) -> Self {
        Self {
            parts: iter.into_iter().map(|p| (p.part_id.clone(), p)).collect(),
        }
    }
}

/// Aggregates raw defect, metric and history rows into one [`PartStats`] per
/// part mentioned anywhere in the input.
pub fn compute_part_stats<T: Scalar>(
    defects: &[DefectRecord],
    metrics: &[PartMetrics<T>],
    history: &[HistoryRecord],
) -> Result<StatsTable<T>, ModelError> {
    let mut parts: BTreeMap<String, PartStats<T>> = BTreeMap::new();

    for m in metrics {
        m.validate()?;
        if parts.contains_key(&m.part_id) {
            return Err(ModelError::DuplicateMetrics(m.part_id.clone()));
        }
        let mut stats = PartStats::empty(&m.part_id);
        stats.metrics = m.entries.clone();
        parts.insert(m.part_id.clone(), stats);
    }

    for d in defects {
        if d.part_id.trim().is_empty() {
            return Err(ModelError::EmptyPartId);
        }
        let stats = parts
            .entry(d.part_id.clone())
            .or_insert_with(|| PartStats::empty(&d.part_id));
        let defect_type = d.defect_type.as_deref().and_then(normalize_label);
        match d.phase {
            Phase::Inspection => {
                stats.inspection_defect_content += 1;
                if let Some(sev) = d.severity.as_deref().and_then(normalize_label) {
                    *stats.severity_counts.entry(sev).or_default() += 1;
                }
                if let Some(t) = defect_type {
                    *stats.type_counts.inspection.entry(t).or_default() += 1;
                }
            }
            Phase::Test => {
                stats.test_defect_content += 1;
                if let Some(t) = defect_type {
                    *stats.type_counts.test.entry(t).or_default() += 1;
                }
            }
        }
    }

    for h in history {
        if h.part_id.trim().is_empty() {
            return Err(ModelError::EmptyPartId);
        }
        let stats = parts
            .entry(h.part_id.clone())
            .or_insert_with(|| PartStats::empty(&h.part_id));
        *stats.history.entry(h.release_id.clone()).or_default() += h.defect_count;
    }

    for stats in parts.values_mut() {
        stats.defect_density = stats
            .loc()
            .map(|loc| T::from_count(stats.inspection_defect_content) / loc);
    }

    Ok(StatsTable { parts })
}

/// Context factors of a project, e.g. `inspector_experience = low`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextProfile {
    pub factors: BTreeMap<String, String>,
}

impl ContextProfile {
    pub fn new<K: Into<String>, V: Into<String>>(
        factors: impl IntoIterator<Item = (K, V)>,
    ) -> Self {
        Self {
            factors: factors
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        }
    }
}

/// How an assumption was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivation {
    Analytic,
    EmpiricalAdapted,
    EmpiricalObserved,
}

/// A stated relationship between inspection results and expected test defects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assumption {
    pub id: String,
    pub statement: String,
    pub derivation: Derivation,
}
