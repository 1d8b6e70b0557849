//! Experience database: selection rules with their assumptions, the context
//! they are trusted in, and how often they have held up in a row.
//!
//! Three things can happen after a quality assurance run:
//!
//! * the rule was correct: its significance goes up by one;
//! * the rule was incorrect: it is retired and a replacement takes over
//!   with significance 1;
//! * the assumed context was wrong: the original stays untouched, and the
//!   rule is credited (or replaced) under the context actually observed.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::evaluate::QualityCategory;
use crate::model::{Assumption, ContextProfile};

#[derive(Debug, Error)]
pub enum EdbError {
    #[error("unknown element {0:?}")]
    UnknownElement(String),
    #[error("element {0:?} is retired")]
    Retired(String),
    #[error("an incorrect outcome needs a replacement element")]
    MissingReplacement,
    #[error("duplicate element id {0:?}")]
    DuplicateId(String),
    #[error("malformed experience database: {0}")]
    Format(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Correct,
    Incorrect,
    ContextMismatch,
}

/// Result of applying an element in one project.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Correct,
    Incorrect,
    /// The project's real context differed from the stored one. `succeeded`
    /// tells whether the rule held under that actual context.
    ContextMismatch {
        actual_context: ContextProfile,
        succeeded: bool,
    },
}

impl Outcome {
    pub fn kind(&self) -> OutcomeKind {
        match self {
            Outcome::Correct => OutcomeKind::Correct,
            Outcome::Incorrect => OutcomeKind::Incorrect,
            Outcome::ContextMismatch { .. } => OutcomeKind::ContextMismatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub project_id: String,
    pub outcome: OutcomeKind,
    #[serde(default)]
    pub category: Option<QualityCategory>,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual_context: Option<ContextProfile>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceElement {
    pub element_id: String,
    /// Selection rule in DSL text.
    pub rule: String,
    pub assumption: Assumption,
    #[serde(default)]
    pub context: ContextProfile,
    #[serde(default)]
    pub significance: u64,
    #[serde(default)]
    pub retired: bool,
    #[serde(default)]
    pub history: Vec<HistoryEntry>,
    /// Fields this version does not know about, kept verbatim.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ExperienceElement {
    /// A never-applied element.
    pub fn new(
        element_id: impl Into<String>,
        rule: impl Into<String>,
        assumption: Assumption,
        context: ContextProfile,
    ) -> Self {
        Self {
            element_id: element_id.into(),
            rule: rule.into(),
            assumption,
            context,
            significance: 0,
            retired: false,
            history: Vec::new(),
            extra: Map::new(),
        }
    }
}

/// Everything needed to record one application of an element.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRecord {
    pub element_id: String,
    pub outcome: Outcome,
    pub project_id: String,
    pub category: Option<QualityCategory>,
    pub timestamp: DateTime<Utc>,
    /// Alternative rule and assumption; required for `Incorrect`, optional for
    /// a context mismatch.
    pub replacement: Option<ExperienceElement>,
}

/// True iff every factor of `stored` has the same value in `query`. Factors
/// missing from `stored` match anything.
pub fn match_context(query: &ContextProfile, stored: &ContextProfile) -> bool {
    stored
        .factors
        .iter()
        .all(|(k, v)| query.factors.get(k) == Some(v))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExperienceDb {
    elements: Vec<ExperienceElement>,
}

impl ExperienceDb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_json(text: &str) -> Result<Self, EdbError> {
        let db: Self = serde_json::from_str(text)?;
        let mut seen = BTreeSet::new();
        for e in &db.elements {
            if !seen.insert(e.element_id.as_str()) {
                return Err(EdbError::DuplicateId(e.element_id.clone()));
            }
        }
        Ok(db)
    }

    /// Pretty JSON with a trailing newline; stable across load/save cycles.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("experience db serializes");
        s.push('\n');
        s
    }

    /// Loads a database file; a missing file is an empty database.
    pub fn load(path: &Path) -> Result<Self, EdbError> {
        match fs::read_to_string(path) {
            Ok(text) if text.trim().is_empty() => Ok(Self::new()),
            Ok(text) => Self::from_json(&text),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), EdbError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn elements(&self) -> &[ExperienceElement] {
        &self.elements
    }

    pub fn get(&self, element_id: &str) -> Option<&ExperienceElement> {
        self.elements.iter().find(|e| e.element_id == element_id)
    }

    fn index_of(&self, element_id: &str) -> Option<usize> {
        self.elements
            .iter()
            .position(|e| e.element_id == element_id)
    }

    /// Seeds a new element. Its significance and history are reset, since it
    /// has not been applied yet.
    pub fn insert(&mut self, mut element: ExperienceElement) -> Result<(), EdbError> {
        if self.get(&element.element_id).is_some() {
            return Err(EdbError::DuplicateId(element.element_id));
        }
        element.significance = 0;
        element.retired = false;
        element.history.clear();
        self.elements.push(element);
        Ok(())
    }

    fn fresh_id(&self, base: &str) -> String {
        (self.elements.len() + 1..)
            .map(|n| format!("{base}.{n}"))
            .find(|id| self.get(id).is_none())
            .expect("unbounded id space")
    }

    /// Applies one outcome. Either the whole update happens or, on error,
    /// nothing changes.
    pub fn record_outcome(&mut self, record: OutcomeRecord) -> Result<(), EdbError> {
        let idx = self
            .index_of(&record.element_id)
            .ok_or_else(|| EdbError::UnknownElement(record.element_id.clone()))?;
        if self.elements[idx].retired {
            return Err(EdbError::Retired(record.element_id));
        }
        if let Some(r) = &record.replacement {
            if self.get(&r.element_id).is_some() {
                return Err(EdbError::DuplicateId(r.element_id.clone()));
            }
        }
        let entry = |kind: OutcomeKind, actual: Option<ContextProfile>| HistoryEntry {
            project_id: record.project_id.clone(),
            outcome: kind,
            category: record.category,
            timestamp: record.timestamp,
            actual_context: actual,
            extra: Map::new(),
        };

        match &record.outcome {
            Outcome::Correct => {
                let e = &mut self.elements[idx];
                e.significance += 1;
                e.history.push(entry(OutcomeKind::Correct, None));
            }
            Outcome::Incorrect => {
                let mut replacement = record
                    .replacement
                    .clone()
                    .ok_or(EdbError::MissingReplacement)?;
                let original = &mut self.elements[idx];
                original.retired = true;
                original.history.push(entry(OutcomeKind::Incorrect, None));
                if replacement.context.factors.is_empty() {
                    replacement.context = original.context.clone();
                }
                replacement.significance = 1;
                replacement.retired = false;
                replacement.history = Vec::new();
                self.elements.push(replacement);
            }
            Outcome::ContextMismatch {
                actual_context,
                succeeded,
            } => {
                let original = &self.elements[idx];
                let rule = record
                    .replacement
                    .as_ref()
                    .map_or(original.rule.clone(), |r| r.rule.clone());
                let existing = self.elements.iter().position(|e| {
                    !e.retired
                        && e.element_id != record.element_id
                        && e.rule == rule
                        && e.context == *actual_context
                });
                let mismatch_entry =
                    entry(OutcomeKind::ContextMismatch, Some(actual_context.clone()));

                match (existing, *succeeded) {
                    (Some(i), true) => {
                        let e = &mut self.elements[i];
                        e.significance += 1;
                        e.history.push(entry(OutcomeKind::Correct, None));
                    }
                    (existing, _) => {
                        if let Some(i) = existing {
                            let e = &mut self.elements[i];
                            e.retired = true;
                            e.history.push(entry(OutcomeKind::Incorrect, None));
                        }
                        let original = &self.elements[idx];
                        let mut element = match record.replacement.clone() {
                            Some(r) => r,
                            None => {
                                let id = self.fresh_id(&original.element_id);
                                ExperienceElement::new(
                                    id,
                                    rule,
                                    original.assumption.clone(),
                                    ContextProfile::default(),
                                )
                            }
                        };
                        element.context = actual_context.clone();
                        element.significance = 1;
                        element.retired = false;
                        element.history = Vec::new();
                        self.elements.push(element);
                    }
                }
                self.elements[idx].history.push(mismatch_entry);
            }
        }
        Ok(())
    }

    /// Active elements whose stored context matches `context`, most
    /// significant first, ties by element id.
    pub fn select_candidates(&self, context: &ContextProfile) -> Vec<&ExperienceElement> {
        let mut out: Vec<_> = self
            .elements
            .iter()
            .filter(|e| !e.retired && match_context(context, &e.context))
            .collect();
        out.sort_by(|a, b| {
            b.significance
                .cmp(&a.significance)
                .then_with(|| a.element_id.cmp(&b.element_id))
        });
        out
    }
}
