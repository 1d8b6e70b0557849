//! Gate that decides whether an inspection defect profile can drive
//! prioritization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::StatsTable;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MonitorConfigError {
    #[error("bounds for {0} have min > max")]
    InvertedBounds(&'static str),
    #[error("bounds for {0} must be finite")]
    NonFinite(&'static str),
}

/// Where the configured thresholds come from. Informational only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdSource {
    Historical,
    Literature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds<T> {
    pub min: T,
    pub max: T,
}

impl<T: Scalar> Bounds<T> {
    pub fn new(min: T, max: T) -> Self {
        Self { min, max }
    }

    fn contains(&self, v: T) -> bool {
        v >= self.min && v <= self.max
    }

    fn render(&self) -> String {
        format!("[{}, {}]", self.min.render(), self.max.render())
    }
}

/// Thresholds for the quality checks. A check is active only when configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig<T> {
    #[serde(default)]
    pub min_total_inspection_defects: Option<u64>,
    /// Inspected lines of code per hour.
    #[serde(default)]
    pub reading_rate_bounds: Option<Bounds<T>>,
    #[serde(default)]
    pub defects_per_kloc_bounds: Option<Bounds<T>>,
    #[serde(default)]
    pub source: Option<ThresholdSource>,
}

impl<T> Default for MonitorConfig<T> {
    fn default() -> Self {
        Self {
            min_total_inspection_defects: None,
            reading_rate_bounds: None,
            defects_per_kloc_bounds: None,
            source: None,
        }
    }
}

impl<T: Scalar> MonitorConfig<T> {
    pub fn validate(&self) -> Result<(), MonitorConfigError> {
        for (name, bounds) in [
            ("reading_rate", &self.reading_rate_bounds),
            ("defects_per_kloc", &self.defects_per_kloc_bounds),
        ] {
            if let Some(b) = bounds {
                if !b.min.is_finite() || !b.max.is_finite() {
                    return Err(MonitorConfigError::NonFinite(name));
                }
                if b.min > b.max {
                    return Err(MonitorConfigError::InvertedBounds(name));
                }
            }
        }
        Ok(())
    }
}

/// Facts about the inspection itself, as opposed to its findings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectionMeta<T> {
    pub inspected_loc: Option<T>,
    pub inspection_hours: Option<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding<T> {
    pub check: String,
    pub observed: Option<T>,
    pub bound: String,
    pub level: Level,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorReport<T> {
    pub verdict: Level,
    pub findings: Vec<Finding<T>>,
}

pub const TOTAL_DEFECTS: &str = "total_defects";
pub const READING_RATE: &str = "reading_rate";
pub const DEFECTS_PER_KLOC: &str = "defects_per_kloc";

fn not_evaluable<T>(check: &str, bound: String, missing: &str) -> Finding<T> {
    Finding {
        check: check.to_string(),
        observed: None,
        bound,
        level: Level::Warn,
        note: Some(format!("not evaluable: {missing}")),
    }
}

fn rate_finding<T: Scalar>(check: &str, observed: T, bounds: &Bounds<T>) -> Finding<T> {
    let inside = bounds.contains(observed);
    Finding {
        check: check.to_string(),
        observed: Some(observed),
        bound: bounds.render(),
        level: if inside { Level::Pass } else { Level::Warn },
        note: (!inside).then(|| "outside bounds".to_string()),
    }
}

/// Runs every configured check. Only a too-small defect total fails; rate
/// checks outside their bounds warn.
pub fn check_profile<T: Scalar>(
    stats: &StatsTable<T>,
    meta: Option<&InspectionMeta<T>>,
    config: &MonitorConfig<T>,
) -> MonitorReport<T> {
    let mut findings = Vec::new();
    let total = stats.total_inspection_defects();

    if let Some(min) = config.min_total_inspection_defects {
        let ok = total >= min;
        findings.push(Finding {
            check: TOTAL_DEFECTS.to_string(),
            observed: Some(T::from_count(total)),
            bound: format!(">= {min}"),
            level: if ok { Level::Pass } else { Level::Fail },
            note: (!ok).then(|| "too few inspection defects to prioritize on".to_string()),
        });
    }

    let inspected_loc = meta
        .and_then(|m| m.inspected_loc)
        .filter(|v| *v > T::zero());
    let hours = meta
        .and_then(|m| m.inspection_hours)
        .filter(|v| *v > T::zero());

    if let Some(bounds) = &config.reading_rate_bounds {
        findings.push(match (inspected_loc, hours) {
            (Some(loc), Some(h)) => rate_finding(READING_RATE, loc / h, bounds),
            _ => not_evaluable(
                READING_RATE,
                bounds.render(),
                "inspected_loc and inspection_hours required",
            ),
        });
    }

    if let Some(bounds) = &config.defects_per_kloc_bounds {
        // Fall back to the summed class lengths when every part has a size.
        let size = inspected_loc.or_else(|| {
            let locs: Option<Vec<T>> = stats.iter().map(|p| p.loc()).collect();
            locs.filter(|v| !v.is_empty())
                .map(|v| v.into_iter().fold(T::zero(), |a, b| a + b))
        });
        findings.push(match size {
            Some(loc) if loc > T::zero() => {
                let per_kloc = T::from_count(total) * T::from_count(1000) / loc;
                rate_finding(DEFECTS_PER_KLOC, per_kloc, bounds)
            }
            _ => not_evaluable(DEFECTS_PER_KLOC, bounds.render(), "inspected size unknown"),
        });
    }

    let verdict = findings
        .iter()
        .map(|f| f.level)
        .max()
        .unwrap_or(Level::Pass);
    MonitorReport { verdict, findings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{compute_part_stats, DefectRecord, PartMetrics, LOC};

    fn stats(defects: usize) -> StatsTable<f64> {
        let d: Vec<_> = (0..defects)
            .map(|_| DefectRecord::inspection("A"))
            .collect();
        let m = PartMetrics::new("A", [(LOC.to_string(), 2411.0)]).unwrap();
        compute_part_stats(&d, &[m], &[]).unwrap()
    }

    fn min_total(n: u64) -> MonitorConfig<f64> {
        MonitorConfig {
            min_total_inspection_defects: Some(n),
            ..Default::default()
        }
    }

    #[test]
    fn passes_with_enough_defects() {
        let r = check_profile(&stats(100), None, &min_total(1));
        assert_eq!(r.verdict, Level::Pass);
        assert_eq!(r.findings.len(), 1);
    }

    #[test]
    fn fails_on_empty_profile() {
        let r = check_profile(&stats(0), None, &min_total(1));
        assert_eq!(r.verdict, Level::Fail);
        let f = &r.findings[0];
        assert_eq!(
            (f.check.as_str(), f.observed, f.bound.as_str(), f.level),
            (TOTAL_DEFECTS, Some(0.0), ">= 1", Level::Fail)
        );
    }

    #[test]
    fn reading_rate_out_of_bounds_warns() {
        let cfg = MonitorConfig {
            reading_rate_bounds: Some(Bounds::new(100.0, 400.0)),
            ..Default::default()
        };
        let meta = InspectionMeta {
            inspected_loc: Some(2411.0),
            inspection_hours: Some(5.0),
        };
        let r = check_profile(&stats(100), Some(&meta), &cfg);
        assert_eq!(r.verdict, Level::Warn);
        assert!((r.findings[0].observed.unwrap() - 482.2).abs() < 1e-9);
    }

    #[test]
    fn missing_inputs_are_not_evaluable() {
        let cfg = MonitorConfig {
            reading_rate_bounds: Some(Bounds::new(100.0, 400.0)),
            ..Default::default()
        };
        let r = check_profile(&stats(3), None, &cfg);
        assert_eq!(r.verdict, Level::Warn);
        assert!(r.findings[0]
            .note
            .as_deref()
            .unwrap()
            .starts_with("not evaluable"));
    }

    #[test]
    fn defects_per_kloc_uses_class_lengths() {
        let cfg = MonitorConfig {
            defects_per_kloc_bounds: Some(Bounds::new(10.0, 50.0)),
            ..Default::default()
        };
        let r = check_profile(&stats(100), None, &cfg);
        assert_eq!(r.verdict, Level::Pass);
        assert!((r.findings[0].observed.unwrap() - 100_000.0 / 2411.0).abs() < 1e-9);
    }

    #[test]
    fn empty_config_passes_silently() {
        let r = check_profile(&stats(0), None, &MonitorConfig::default());
        assert_eq!(r.verdict, Level::Pass);
        assert!(r.findings.is_empty());
    }

    #[test]
    fn inverted_bounds_invalid() {
        let cfg = MonitorConfig {
            reading_rate_bounds: Some(Bounds::new(400.0, 100.0)),
            ..Default::default()
        };
        assert_eq!(
            cfg.validate(),
            Err(MonitorConfigError::InvertedBounds("reading_rate"))
        );
    }
}
