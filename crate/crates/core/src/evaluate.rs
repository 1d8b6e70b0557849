//! Retrospective scoring of selection rules against test defect data.
//!
//! Each rule gets a four-scale quality category plus precision, recall and
//! balanced F-measure of its part selection against the defect-prone parts
//! (parts in which testing found at least one defect).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dsl::{select_parts, SelectionRule};
use crate::model::StatsTable;
use crate::scalar::Scalar;

/// Coverage criterion: how many test defects may lie outside the selection.
/// Zero is the strong rule; anything higher is a weak rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub missed_defect_tolerance: u64,
}

impl EvaluationConfig {
    pub fn strong() -> Self {
        Self::default()
    }

    pub fn weak(tolerance: u64) -> Self {
        Self {
            missed_defect_tolerance: tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QualityCategory {
    /// Covered, no extra parts.
    I,
    /// Covered, with extra parts selected.
    II,
    /// Not covered, but some defect-prone part selected.
    III,
    /// Not covered, no defect-prone part selected.
    IV,
    /// Every part selected: no effort reduction possible.
    #[serde(rename = "no_reduction")]
    NoReduction,
}

impl fmt::Display for QualityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QualityCategory::I => "I",
            QualityCategory::II => "II",
            QualityCategory::III => "III",
            QualityCategory::IV => "IV",
            QualityCategory::NoReduction => "no_reduction",
        })
    }
}

impl std::str::FromStr for QualityCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "I" | "1" => Ok(Self::I),
            "II" | "2" => Ok(Self::II),
            "III" | "3" => Ok(Self::III),
            "IV" | "4" => Ok(Self::IV),
            "no_reduction" => Ok(Self::NoReduction),
            other => Err(format!("unknown quality category {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores<T> {
    pub precision: T,
    pub recall: T,
    pub f_measure: T,
}

/// Parts where testing found at least one defect.
pub fn defect_prone_parts<T: Scalar>(stats: &StatsTable<T>) -> BTreeSet<String> {
    stats
        .iter()
        .filter(|p| p.test_defect_content >= 1)
        .map(|p| p.part_id.clone())
        .collect()
}

/// Precision is 0 for an empty selection; recall is 1 when nothing is
/// defect-prone.
pub fn precision_recall_f<T: Scalar>(
    selected: &BTreeSet<String>,
    defect_prone: &BTreeSet<String>,
) -> Scores<T> {
    let hits = T::from_count(selected.intersection(defect_prone).count() as u64);
    let precision = if selected.is_empty() {
        T::zero()
    } else {
        hits / T::from_count(selected.len() as u64)
    };
    let recall = if defect_prone.is_empty() {
        T::one()
    } else {
        hits / T::from_count(defect_prone.len() as u64)
    };
    let sum = precision + recall;
    let f_measure = if sum == T::zero() {
        T::zero()
    } else {
        (T::one() + T::one()) * precision * recall / sum
    };
    Scores {
        precision,
        recall,
        f_measure,
    }
}

/// Test defects lying in parts outside the selection.
pub fn missed_defects(selected: &BTreeSet<String>, test_defects: &BTreeMap<String, u64>) -> u64 {
    test_defects
        .iter()
        .filter(|(part, _)| !selected.contains(*part))
        .map(|(_, n)| n)
        .sum()
}

/// Grades a selection. `test_defects` maps part id to the number of defects
/// testing found there; parts with a nonzero count are the defect-prone ones.
pub fn classify_rule(
    selected: &BTreeSet<String>,
    test_defects: &BTreeMap<String, u64>,
    all_parts: &BTreeSet<String>,
    config: EvaluationConfig,
) -> QualityCategory {
    if !all_parts.is_empty() && selected == all_parts {
        return QualityCategory::NoReduction;
    }
    let prone = |p: &String| test_defects.get(p).is_some_and(|n| *n > 0);
    let covered = missed_defects(selected, test_defects) <= config.missed_defect_tolerance;
    let extras = selected.iter().any(|p| !prone(p));
    let hits_any = selected.iter().any(prone);
    match (covered, extras, hits_any) {
        (true, false, _) => QualityCategory::I,
        (true, true, _) => QualityCategory::II,
        (false, _, true) => QualityCategory::III,
        (false, _, false) => QualityCategory::IV,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleEvaluation<T> {
    pub rule_id: String,
    pub selected: BTreeSet<String>,
    pub defect_prone: BTreeSet<String>,
    pub category: QualityCategory,
    pub precision: T,
    pub recall: T,
    pub f_measure: T,
    pub missed_defects: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RuleOutcome<T> {
    Evaluated(RuleEvaluation<T>),
    Unevaluable { rule_id: String, reason: String },
}

impl<T> RuleOutcome<T> {
    pub fn rule_id(&self) -> &str {
        match self {
            RuleOutcome::Evaluated(e) => &e.rule_id,
            RuleOutcome::Unevaluable { rule_id, .. } => rule_id,
        }
    }

    pub fn evaluation(&self) -> Option<&RuleEvaluation<T>> {
        match self {
            RuleOutcome::Evaluated(e) => Some(e),
            RuleOutcome::Unevaluable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport<T> {
    /// One entry per rule, in input order.
    pub results: Vec<RuleOutcome<T>>,
    /// Ids of evaluated rules by F-measure descending, ties by input order.
    pub ranking: Vec<String>,
}

pub fn evaluate_one<T: Scalar>(
    rule: &SelectionRule<T>,
    stats: &StatsTable<T>,
    config: EvaluationConfig,
) -> RuleOutcome<T> {
    let selected = match select_parts(&rule.expr, stats) {
        Ok(s) => s,
        Err(e) => {
            return RuleOutcome::Unevaluable {
                rule_id: rule.id.clone(),
                reason: e.to_string(),
            }
        }
    };
    let test_defects = stats.test_defects();
    let defect_prone = defect_prone_parts(stats);
    let scores = precision_recall_f(&selected, &defect_prone);
    let category = classify_rule(&selected, &test_defects, &stats.part_ids(), config);
    RuleOutcome::Evaluated(RuleEvaluation {
        rule_id: rule.id.clone(),
        missed_defects: missed_defects(&selected, &test_defects),
        selected,
        defect_prone,
        category,
        precision: scores.precision,
        recall: scores.recall,
        f_measure: scores.f_measure,
    })
}

/// Evaluates every rule independently; a rule that cannot be evaluated is
/// reported as such without affecting the others.
pub fn evaluate_ruleset<T: Scalar>(
    rules: &[SelectionRule<T>],
    stats: &StatsTable<T>,
    config: EvaluationConfig,
) -> EvaluationReport<T> {
    let results: Vec<_> = rules
        .iter()
        .map(|r| evaluate_one(r, stats, config))
        .collect();
    let mut ranked: Vec<&RuleEvaluation<T>> =
        results.iter().filter_map(RuleOutcome::evaluation).collect();
    // stable sort keeps input order among equal scores
    ranked.sort_by(|a, b| {
        b.f_measure
            .partial_cmp(&a.f_measure)
            .unwrap_or(Ordering::Equal)
    });
    let ranking = ranked.into_iter().map(|e| e.rule_id.clone()).collect();
    EvaluationReport { results, ranking }
}

pub const CSV_HEADER: &str = "rule_id,selection,category,precision,recall,f_measure";

/// Table-style CSV: selections joined with `;`, scores rounded half-up to
/// two decimals. Unevaluable rules get category `unevaluable` and empty cells.
pub fn render_csv<T: Scalar>(report: &EvaluationReport<T>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for result in &report.results {
        let line = match result {
            RuleOutcome::Evaluated(e) => format!(
                "{},{},{},{},{},{}",
                e.rule_id,
                e.selected
                    .iter()
                    .map(String::as_str)
                    .collect::<Vec<_>>()
                    .join(";"),
                e.category,
                e.precision.round_half_up(2),
                e.recall.round_half_up(2),
                e.f_measure.round_half_up(2),
            ),
            RuleOutcome::Unevaluable { rule_id, .. } => format!("{rule_id},,unevaluable,,,"),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}
