//! Test prioritization plans, effort allocation and runtime redirection.

use std::cmp::Ordering as CmpOrdering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{evaluate_rule, select_parts, EvalError, Scope, Selection, SelectionRule};
use crate::model::{DefectRecord, Phase, StatsTable};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrioritizeError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("part {0:?} has no defect density (missing `loc`)")]
    MissingDensity(String),
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error("two-stage prioritization needs a part-scope rule")]
    NotPartScope,
    #[error("budget must be positive and finite")]
    BadBudget,
    #[error("weighted share must lie in (0, 1]")]
    BadShare,
    #[error("top_only allocation with nothing prioritized")]
    NoTarget,
    #[error("prioritized part {0:?} is not among the known parts")]
    UnknownPart(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[allow(clippy::enum_variant_names)]
pub enum RankKey {
    ByDefectContent,
    ByDensity,
    ById,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    TopOnly,
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeRanking {
    /// One-stage prioritization on defect types.
    Global(Vec<String>),
    /// Two-stage: a ranking within each prioritized part.
    PerPart(BTreeMap<String, Vec<String>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanFlag {
    /// Every part is prioritized, so focusing saves nothing.
    NoEffortReduction,
    /// Nothing was prioritized; effort was spread uniformly.
    EmptyPrioritization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrioritizationPlan<T> {
    pub rule_id: String,
    pub prioritized_parts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prioritized_types: Option<TypeRanking>,
    #[serde(default)]
    pub strategy: Option<Strategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocations: Option<BTreeMap<String, T>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<PlanFlag>,
}

impl<T> PrioritizationPlan<T> {
    fn new(rule_id: &str) -> Self {
        Self {
            rule_id: rule_id.to_string(),
            prioritized_parts: Vec::new(),
            prioritized_types: None,
            strategy: None,
            allocations: None,
            flags: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.prioritized_parts.is_empty()
            && match &self.prioritized_types {
                None => true,
                Some(TypeRanking::Global(t)) => t.is_empty(),
                Some(TypeRanking::PerPart(m)) => m.is_empty(),
            }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Keep,
    Redirect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedirectDecision {
    pub verdict: Verdict,
    pub reason: String,
    pub replacement_rule_id: Option<String>,
}

fn rank_by_count(counts: BTreeMap<&str, u64>, top_k: usize) -> Vec<String> {
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().filter(|(_, n)| *n > 0).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked
        .into_iter()
        .take(top_k)
        .map(|(t, _)| t.to_string())
        .collect()
}

fn order_parts<T: Scalar>(
    parts: BTreeSet<String>,
    stats: &StatsTable<T>,
    key: RankKey,
) -> Result<Vec<String>, PrioritizeError> {
    let mut parts: Vec<String> = parts.into_iter().collect();
    match key {
        RankKey::ById => {}
        RankKey::ByDefectContent => {
            let content = |id: &str| stats.get(id).map_or(0, |p| p.inspection_defect_content);
            parts.sort_by(|a, b| content(b).cmp(&content(a)).then_with(|| a.cmp(b)));
        }
        RankKey::ByDensity => {
            let mut keyed = Vec::with_capacity(parts.len());
            for id in parts {
                let density = stats
                    .get(&id)
                    .and_then(|p| p.defect_density)
                    .ok_or_else(|| PrioritizeError::MissingDensity(id.clone()))?;
                keyed.push((density, id));
            }
            keyed.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(CmpOrdering::Equal)
                    .then_with(|| a.1.cmp(&b.1))
            });
            parts = keyed.into_iter().map(|(_, id)| id).collect();
        }
    }
    Ok(parts)
}

/// One-stage prioritization. A part-scope rule yields ordered parts; a
/// type-scope rule yields a global defect-type ranking by inspection count.
pub fn prioritize<T: Scalar>(
    rule: &SelectionRule<T>,
    stats: &StatsTable<T>,
    key: RankKey,
) -> Result<PrioritizationPlan<T>, PrioritizeError> {
    let mut plan = PrioritizationPlan::new(&rule.id);
    match evaluate_rule(&rule.expr, stats)? {
        Selection::Parts(parts) => plan.prioritized_parts = order_parts(parts, stats, key)?,
        Selection::DefectTypes(types) => {
            let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
            for part in stats.iter() {
                for (ty, n) in &part.type_counts.inspection {
                    if types.contains(ty) {
                        *totals.entry(ty.as_str()).or_default() += n;
                    }
                }
            }
            plan.prioritized_types = Some(TypeRanking::Global(rank_by_count(totals, usize::MAX)));
        }
    }
    Ok(plan)
}

/// Defect types ranked by inspection-phase count within `within_parts` (all
/// parts when `None`), most frequent first, ties by name.
pub fn prioritize_defect_types<T: Scalar>(
    stats: &StatsTable<T>,
    within_parts: Option<&BTreeSet<String>>,
    top_k: usize,
) -> Result<Vec<String>, PrioritizeError> {
    if top_k == 0 {
        return Err(PrioritizeError::ZeroTopK);
    }
    let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
    for part in stats.iter() {
        if within_parts.is_some_and(|w| !w.contains(&part.part_id)) {
            continue;
        }
        for (ty, n) in &part.type_counts.inspection {
            *totals.entry(ty.as_str()).or_default() += n;
        }
    }
    Ok(rank_by_count(totals, top_k))
}

/// Parts first, then the top `top_k` defect types within each selected part.
pub fn two_stage<T: Scalar>(
    rule: &SelectionRule<T>,
    stats: &StatsTable<T>,
    key: RankKey,
    top_k: usize,
) -> Result<PrioritizationPlan<T>, PrioritizeError> {
    if rule.scope() != Scope::Parts {
        return Err(PrioritizeError::NotPartScope);
    }
    if top_k == 0 {
        return Err(PrioritizeError::ZeroTopK);
    }
    let mut plan = prioritize(rule, stats, key)?;
    let mut per_part = BTreeMap::new();
    for part_id in &plan.prioritized_parts {
        let only = BTreeSet::from([part_id.clone()]);
        let ranking = prioritize_defect_types(stats, Some(&only), top_k)?;
        per_part.insert(part_id.clone(), ranking);
    }
    plan.prioritized_types = Some(TypeRanking::PerPart(per_part));
    Ok(plan)
}

fn split_equally<T: Scalar>(amount: T, parts: &[&String], into: &mut BTreeMap<String, T>) {
    if parts.is_empty() {
        return;
    }
    let share = amount / T::from_count(parts.len() as u64);
    for p in parts {
        into.insert((*p).clone(), share);
    }
}

/// Distributes `budget` effort units over `all_parts`.
///
/// `TopOnly` splits the whole budget equally among the prioritized parts.
/// `Weighted` gives `weighted_share` of it to the prioritized parts and the
/// remainder to the others, equally within each group. When one group is
/// empty the other receives the whole budget, and the plan is flagged.
pub fn allocate_effort<T: Scalar>(
    plan: &PrioritizationPlan<T>,
    budget: T,
    strategy: Strategy,
    weighted_share: T,
    all_parts: &BTreeSet<String>,
) -> Result<PrioritizationPlan<T>, PrioritizeError> {
    if !(budget.is_finite() && budget > T::zero()) {
        return Err(PrioritizeError::BadBudget);
    }
    if !(weighted_share > T::zero() && weighted_share <= T::one()) {
        return Err(PrioritizeError::BadShare);
    }
    if let Some(p) = plan
        .prioritized_parts
        .iter()
        .find(|p| !all_parts.contains(*p))
    {
        return Err(PrioritizeError::UnknownPart(p.clone()));
    }

    let top: Vec<&String> = all_parts
        .iter()
        .filter(|p| plan.prioritized_parts.contains(p))
        .collect();
    let rest: Vec<&String> = all_parts
        .iter()
        .filter(|p| !plan.prioritized_parts.contains(p))
        .collect();

    let mut out = plan.clone();
    out.flags.retain(|f| {
        !matches!(
            f,
            PlanFlag::NoEffortReduction | PlanFlag::EmptyPrioritization
        )
    });
    let mut allocations: BTreeMap<String, T> =
        all_parts.iter().map(|p| (p.clone(), T::zero())).collect();

    if top.is_empty() {
        match strategy {
            Strategy::TopOnly => return Err(PrioritizeError::NoTarget),
            Strategy::Weighted => {
                split_equally(budget, &rest, &mut allocations);
                out.flags.push(PlanFlag::EmptyPrioritization);
            }
        }
    } else if rest.is_empty() {
        split_equally(budget, &top, &mut allocations);
        out.flags.push(PlanFlag::NoEffortReduction);
    } else {
        match strategy {
            Strategy::TopOnly => split_equally(budget, &top, &mut allocations),
            Strategy::Weighted => {
                let prioritized = weighted_share * budget;
                split_equally(prioritized, &top, &mut allocations);
                split_equally(budget - prioritized, &rest, &mut allocations);
            }
        }
    }

    out.strategy = Some(strategy);
    out.allocations = Some(allocations);
    Ok(out)
}

/// Checks interim test results against the plan. Any test defect outside the
/// prioritized parts triggers a redirect to the first alternative rule whose
/// selection covers every part with interim defects.
pub fn redirect<T: Scalar>(
    plan: &PrioritizationPlan<T>,
    interim_test_defects: &[DefectRecord],
    alternatives: &[SelectionRule<T>],
    stats: &StatsTable<T>,
) -> RedirectDecision {
    let hit: BTreeSet<&str> = interim_test_defects
        .iter()
        .filter(|d| d.phase == Phase::Test)
        .map(|d| d.part_id.as_str())
        .collect();
    let missed: Vec<&str> = hit
        .iter()
        .copied()
        .filter(|p| !plan.prioritized_parts.iter().any(|q| q == p))
        .collect();

    if missed.is_empty() {
        return RedirectDecision {
            verdict: Verdict::Keep,
            reason: "all interim test defects lie in prioritized parts".to_string(),
            replacement_rule_id: None,
        };
    }

    let replacement = alternatives.iter().find(|rule| {
        select_parts(&rule.expr, stats).is_ok_and(|sel| hit.iter().all(|p| sel.contains(*p)))
    });
    RedirectDecision {
        verdict: Verdict::Redirect,
        reason: format!(
            "test defects found in non-prioritized parts: {}",
            missed.join(", ")
        ),
        replacement_rule_id: replacement.map(|r| r.id.clone()),
    }
}
