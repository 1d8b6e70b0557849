//! Rule-based integration of inspection results into test planning.
//!
//! Inspection defect profiles, code metrics and defect history are turned
//! into per-part statistics ([`model`]), checked for trustworthiness
//! ([`monitor`]), and fed to selection rules written in a small DSL
//! ([`dsl`]) to prioritize parts or defect types for testing
//! ([`prioritize`]). After testing, rules are graded against the observed
//! test defects ([`evaluate`]) and their track record is kept in an
//! experience database ([`edb`]).
//!
//! All numeric code is generic over [`Scalar`]; the aliases below fix it to
//! `f64` or to exact `Rational64` arithmetic.

pub mod cli;
pub mod dsl;
pub mod edb;
pub mod evaluate;
pub mod io;
pub mod model;
pub mod monitor;
pub mod prioritize;
pub mod scalar;

pub use num_rational::Rational64;
pub use scalar::Scalar;

pub type PartMetrics = model::PartMetrics<f64>;
pub type PartStats = model::PartStats<f64>;
pub type StatsTable = model::StatsTable<f64>;
pub type SelectionRule = dsl::SelectionRule<f64>;
pub type RuleExpr = dsl::RuleExpr<f64>;
pub type Predicate = dsl::Predicate<f64>;
pub type MonitorConfig = monitor::MonitorConfig<f64>;
pub type MonitorReport = monitor::MonitorReport<f64>;
pub type PrioritizationPlan = prioritize::PrioritizationPlan<f64>;
pub type RuleEvaluation = evaluate::RuleEvaluation<f64>;
pub type EvaluationReport = evaluate::EvaluationReport<f64>;

pub type ExactPartMetrics = model::PartMetrics<Rational64>;
pub type ExactStatsTable = model::StatsTable<Rational64>;
pub type ExactSelectionRule = dsl::SelectionRule<Rational64>;
pub type ExactPrioritizationPlan = prioritize::PrioritizationPlan<Rational64>;
pub type ExactRuleEvaluation = evaluate::RuleEvaluation<Rational64>;
pub type ExactEvaluationReport = evaluate::EvaluationReport<Rational64>;
