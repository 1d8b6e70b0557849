//! Selection rules: a scope plus a conjunction of threshold predicates.
//!
//! ```text
//! rule      := "focus" scope "where" predicate { "&" predicate }
//! scope     := "parts" | "defect_types"
//! predicate := metric op number
//! metric    := "defect_content" [ "(" "severity" "=" label ")" ]
//!            | "defect_density" | "defect_density_kloc"
//!            | "loc" | "mean_method_length"
//!            | "metric" "(" string ")"
//!            | "history_defects" "(" "last" "=" integer ")"
//! op        := ">" | ">=" | "<" | "<=" | "=="
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::model::{normalize_label, PartStats, StatsTable};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at position {position}: {message}")]
pub struct ParseError {
    /// Byte offset into the rule text.
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("metric `{metric}` is not available for part {part:?}")]
    MissingMetric { part: String, metric: String },
    #[error("metric `{0}` cannot be used in a defect_types rule (only defect_content)")]
    IllegalForTypes(String),
    #[error("rule selects defect types, not parts")]
    NotPartScope,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ThresholdError {
    #[error("cannot derive a threshold from an empty list")]
    Empty,
    #[error("fraction must lie in (0, 1]")]
    BadFraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scope {
    Parts,
    DefectTypes,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Parts => "parts",
            Scope::DefectTypes => "defect_types",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
}

impl CmpOp {
    pub fn holds<T: PartialOrd>(self, lhs: T, rhs: T) -> bool {
        match self {
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Eq => lhs == rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MetricRef {
    DefectContent,
    /// Inspection defects of one severity label (normalized lowercase).
    DefectContentSeverity(String),
    DefectDensity,
    DefectDensityKloc,
    Loc,
    MeanMethodLength,
    Named(String),
    /// Historical defects summed over the last N releases.
    HistoryDefects(usize),
}

impl MetricRef {
    /// Value of this metric for a part, or `None` when the data is absent.
    pub fn resolve<T: Scalar>(&self, part: &PartStats<T>) -> Option<T> {
        match self {
            MetricRef::DefectContent => Some(T::from_count(part.inspection_defect_content)),
            MetricRef::DefectContentSeverity(s) => Some(T::from_count(part.severity_count(s))),
            MetricRef::DefectDensity => part.defect_density,
            MetricRef::DefectDensityKloc => part.defect_density.map(|d| d * T::from_count(1000)),
            MetricRef::Loc => part.loc(),
            MetricRef::MeanMethodLength => part.mean_method_length(),
            MetricRef::Named(name) => part.metric(name),
            MetricRef::HistoryDefects(n) => part.history_defects(*n).map(T::from_count),
        }
    }
}

impl fmt::Display for MetricRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricRef::DefectContent => f.write_str("defect_content"),
            MetricRef::DefectContentSeverity(s) => {
                write!(f, "defect_content(severity={})", render_label(s))
            }
            MetricRef::DefectDensity => f.write_str("defect_density"),
            MetricRef::DefectDensityKloc => f.write_str("defect_density_kloc"),
            MetricRef::Loc => f.write_str("loc"),
            MetricRef::MeanMethodLength => f.write_str("mean_method_length"),
            MetricRef::Named(name) => write!(f, "metric({})", quote(name)),
            MetricRef::HistoryDefects(n) => write!(f, "history_defects(last={n})"),
        }
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn render_label(s: &str) -> String {
    if is_ident(s) {
        s.to_string()
    } else {
        quote(s)
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if matches!(c, '"' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate<T> {
    pub metric: MetricRef,
    pub op: CmpOp,
    pub threshold: T,
}

impl<T: Scalar> fmt::Display for Predicate<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}",
            self.metric,
            self.op.symbol(),
            self.threshold.render()
        )
    }
}

/// The parsed body of a selection rule. `Display` renders canonical DSL text.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleExpr<T> {
    pub scope: Scope,
    pub predicates: Vec<Predicate<T>>,
}

impl<T: Scalar> fmt::Display for RuleExpr<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "focus {} where ", self.scope)?;
        for (i, p) in self.predicates.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// A selection rule tied to the assumption it operationalizes.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRule<T> {
    pub id: String,
    pub assumption_id: String,
    pub expr: RuleExpr<T>,
    pub source_text: String,
}

impl<T: Scalar> SelectionRule<T> {
    pub fn parse(
        id: impl Into<String>,
        assumption_id: impl Into<String>,
        text: &str,
    ) -> Result<Self, ParseError> {
        Ok(Self {
            id: id.into(),
            assumption_id: assumption_id.into(),
            expr: parse_rule(text)?,
            source_text: text.to_string(),
        })
    }

    pub fn scope(&self) -> Scope {
        self.expr.scope
    }
}

/// Outcome of evaluating a rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    Parts(BTreeSet<String>),
    DefectTypes(BTreeSet<String>),
}

impl Selection {
    pub fn ids(&self) -> &BTreeSet<String> {
        match self {
            Selection::Parts(s) | Selection::DefectTypes(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Str(String),
    Number(String),
    Op(CmpOp),
    Assign,
    Amp,
    LParen,
    RParen,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Ident(s) => format!("`{s}`"),
            Token::Str(s) => format!("string {}", quote(s)),
            Token::Number(s) => format!("number `{s}`"),
            Token::Op(op) => format!("`{}`", op.symbol()),
            Token::Assign => "`=`".into(),
            Token::Amp => "`&`".into(),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
        }
    }
}

fn err(position: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        position,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'&' => {
                tokens.push((start, Token::Amp));
                i += 1;
            }
            b'(' => {
                tokens.push((start, Token::LParen));
                i += 1;
            }
            b')' => {
                tokens.push((start, Token::RParen));
                i += 1;
            }
            b'>' | b'<' | b'=' => {
                let eq_next = bytes.get(i + 1) == Some(&b'=');
                let tok = match (c, eq_next) {
                    (b'>', true) => Token::Op(CmpOp::Ge),
                    (b'>', false) => Token::Op(CmpOp::Gt),
                    (b'<', true) => Token::Op(CmpOp::Le),
                    (b'<', false) => Token::Op(CmpOp::Lt),
                    (_, true) => Token::Op(CmpOp::Eq),
                    (_, false) => Token::Assign,
                };
                i += if eq_next { 2 } else { 1 };
                tokens.push((start, tok));
            }
            b'"' => {
                i += 1;
                let mut s = String::new();
                loop {
                    let rest = &text[i..];
                    let mut chars = rest.chars();
                    match chars.next() {
                        None => return Err(err(start, "unterminated string")),
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some('\\') => match chars.next() {
                            Some(e @ ('"' | '\\')) => {
                                s.push(e);
                                i += 2;
                            }
                            _ => return Err(err(i, "invalid escape in string")),
                        },
                        Some(ch) => {
                            s.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                tokens.push((start, Token::Str(s)));
            }
            b'0'..=b'9' | b'-' | b'.' => {
                i += 1;
                while i < bytes.len() {
                    let b = bytes[i];
                    let sign_after_exp =
                        matches!(b, b'+' | b'-') && matches!(bytes[i - 1], b'e' | b'E');
                    if b.is_ascii_digit()
                        || matches!(b, b'.' | b'e' | b'E' | b'/')
                        || sign_after_exp
                    {
                        i += 1;
                    } else {
                        break;
                    }
                }
                tokens.push((start, Token::Number(text[start..i].to_string())));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'-')
                {
                    i += 1;
                }
                tokens.push((start, Token::Ident(text[start..i].to_string())));
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(err(start, format!("unexpected character {ch:?}")));
            }
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
    _text: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn next(&mut self, expected: &str) -> Result<(usize, Token), ParseError> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => Err(err(
                self.end,
                format!("expected {expected}, found end of input"),
            )),
        }
    }

    fn expect(&mut self, want: &Token, expected: &str) -> Result<(), ParseError> {
        let (at, tok) = self.next(expected)?;
        if &tok == want {
            Ok(())
        } else {
            Err(err(
                at,
                format!("expected {expected}, found {}", tok.describe()),
            ))
        }
    }

    fn keyword(&mut self, word: &str) -> Result<(), ParseError> {
        self.expect(&Token::Ident(word.to_string()), &format!("`{word}`"))
    }

    fn scope(&mut self) -> Result<Scope, ParseError> {
        let (at, tok) = self.next("`parts` or `defect_types`")?;
        match tok {
            Token::Ident(s) if s == "parts" => Ok(Scope::Parts),
            Token::Ident(s) if s == "defect_types" => Ok(Scope::DefectTypes),
            other => Err(err(
                at,
                format!(
                    "expected `parts` or `defect_types`, found {}",
                    other.describe()
                ),
            )),
        }
    }

    fn qualifier(&mut self, key: &str) -> Result<(usize, Token), ParseError> {
        self.expect(&Token::LParen, "`(`")?;
        self.keyword(key)?;
        self.expect(&Token::Assign, "`=`")?;
        let value = self.next("a value")?;
        self.expect(&Token::RParen, "`)`")?;
        Ok(value)
    }

    fn metric(&mut self) -> Result<MetricRef, ParseError> {
        let (at, tok) = self.next("a metric")?;
        let name = match tok {
            Token::Ident(name) => name,
            other => {
                return Err(err(
                    at,
                    format!("expected a metric, found {}", other.describe()),
                ))
            }
        };
        Ok(match name.as_str() {
            "defect_content" => {
                if self.peek() == Some(&Token::LParen) {
                    let (vat, value) = self.qualifier("severity")?;
                    let label = match value {
                        Token::Ident(s) | Token::Str(s) => normalize_label(&s),
                        _ => None,
                    };
                    match label {
                        Some(label) => MetricRef::DefectContentSeverity(label),
                        None => {
                            return Err(err(
                                vat,
                                "malformed qualifier: severity needs a non-empty label",
                            ))
                        }
                    }
                } else {
                    MetricRef::DefectContent
                }
            }
            "defect_density" => MetricRef::DefectDensity,
            "defect_density_kloc" => MetricRef::DefectDensityKloc,
            "loc" => MetricRef::Loc,
            "mean_method_length" => MetricRef::MeanMethodLength,
            "metric" => {
                self.expect(&Token::LParen, "`(`")?;
                let (nat, value) = self.next("a metric name")?;
                let name = match value {
                    Token::Str(s) | Token::Ident(s) if !s.trim().is_empty() => s.trim().to_string(),
                    _ => {
                        return Err(err(
                            nat,
                            "malformed qualifier: metric needs a non-empty name",
                        ))
                    }
                };
                self.expect(&Token::RParen, "`)`")?;
                MetricRef::Named(name)
            }
            "history_defects" => {
                let (vat, value) = self.qualifier("last")?;
                let n = match value {
                    Token::Number(s) => s.parse::<usize>().ok().filter(|n| *n >= 1),
                    _ => None,
                };
                match n {
                    Some(n) => MetricRef::HistoryDefects(n),
                    None => {
                        return Err(err(
                            vat,
                            "malformed qualifier: `last` must be an integer >= 1",
                        ))
                    }
                }
            }
            other => return Err(err(at, format!("unknown metric `{other}`"))),
        })
    }

    fn predicate<T: Scalar>(&mut self) -> Result<Predicate<T>, ParseError> {
        let metric = self.metric()?;
        let (at, tok) = self.next("a comparison operator")?;
        let op = match tok {
            Token::Op(op) => op,
            other => {
                return Err(err(
                    at,
                    format!("expected a comparison operator, found {}", other.describe()),
                ))
            }
        };
        let (at, tok) = self.next("a number")?;
        let threshold = match tok {
            Token::Number(s) => {
                T::parse_literal(&s).ok_or_else(|| err(at, format!("invalid number `{s}`")))?
            }
            other => {
                return Err(err(
                    at,
                    format!("expected a number, found {}", other.describe()),
                ))
            }
        };
        Ok(Predicate {
            metric,
            op,
            threshold,
        })
    }
}

/// Parses DSL text into a rule body.
pub fn parse_rule<T: Scalar>(text: &str) -> Result<RuleExpr<T>, ParseError> {
    let mut p = Parser {
        tokens: tokenize(text)?,
        pos: 0,
        end: text.len(),
        _text: text,
    };
    p.keyword("focus")?;
    let scope = p.scope()?;
    p.keyword("where")?;
    let mut predicates = Vec::new();
    loop {
        let at = p.offset();
        let pred: Predicate<T> = p.predicate()?;
        if scope == Scope::DefectTypes && pred.metric != MetricRef::DefectContent {
            return Err(err(
                at,
                format!(
                    "metric `{}` cannot be used in a defect_types rule",
                    pred.metric
                ),
            ));
        }
        predicates.push(pred);
        match p.peek() {
            None => break,
            Some(Token::Amp) => p.pos += 1,
            Some(other) => {
                let msg = format!("expected `&` or end of rule, found {}", other.describe());
                return Err(err(p.offset(), msg));
            }
        }
    }
    Ok(RuleExpr { scope, predicates })
}

impl<T: Scalar> RuleExpr<T> {
    /// Whether one part satisfies every predicate. Missing data is an error.
    pub fn matches_part(&self, part: &PartStats<T>) -> Result<bool, EvalError> {
        let mut all = true;
        for pred in &self.predicates {
            let value = pred
                .metric
                .resolve(part)
                .ok_or_else(|| EvalError::MissingMetric {
                    part: part.part_id.clone(),
                    metric: pred.metric.to_string(),
                })?;
            all &= pred.op.holds(value, pred.threshold);
        }
        Ok(all)
    }
}

/// Applies a rule to the statistics table.
///
/// Part scope selects each part whose metrics satisfy every predicate.
/// Defect-type scope selects each type whose inspection count, summed over
/// all parts, satisfies every `defect_content` predicate.
pub fn evaluate_rule<T: Scalar>(
    rule: &RuleExpr<T>,
    stats: &StatsTable<T>,
) -> Result<Selection, EvalError> {
    match rule.scope {
        Scope::Parts => {
            let mut selected = BTreeSet::new();
            for part in stats.iter() {
                if rule.matches_part(part)? {
                    selected.insert(part.part_id.clone());
                }
            }
            Ok(Selection::Parts(selected))
        }
        Scope::DefectTypes => {
            if let Some(p) = rule
                .predicates
                .iter()
                .find(|p| p.metric != MetricRef::DefectContent)
            {
                return Err(EvalError::IllegalForTypes(p.metric.to_string()));
            }
            let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
            for part in stats.iter() {
                for (ty, n) in &part.type_counts.inspection {
                    *totals.entry(ty.as_str()).or_default() += n;
                }
            }
            let selected = totals
                .into_iter()
                .filter(|(_, n)| {
                    rule.predicates
                        .iter()
                        .all(|p| p.op.holds(T::from_count(*n), p.threshold))
                })
                .map(|(ty, _)| ty.to_string())
                .collect();
            Ok(Selection::DefectTypes(selected))
        }
    }
}

/// Part-scope evaluation; errors if the rule targets defect types.
pub fn select_parts<T: Scalar>(
    rule: &RuleExpr<T>,
    stats: &StatsTable<T>,
) -> Result<BTreeSet<String>, EvalError> {
    match evaluate_rule(rule, stats)? {
        Selection::Parts(parts) => Ok(parts),
        Selection::DefectTypes(_) => Err(EvalError::NotPartScope),
    }
}

/// `fraction` of the largest value, e.g. 80% of the highest defect count.
pub fn derive_threshold<T: Scalar>(values: &[T], fraction: T) -> Result<T, ThresholdError> {
    if !(fraction > T::zero() && fraction <= T::one()) {
        return Err(ThresholdError::BadFraction);
    }
    let mut iter = values.iter().copied();
    let first = iter.next().ok_or(ThresholdError::Empty)?;
    let max = iter.fold(first, |m, v| if v > m { v } else { m });
    Ok(fraction * max)
}
