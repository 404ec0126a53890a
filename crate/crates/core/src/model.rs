//! Domain types shared by every stage of the pipeline.
//!
//! Everything here is a plain value type: no I/O, no interior mutability.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Benchmark split a theorem belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum Split {
    Valid,
    Test,
    #[default]
    Custom,
}

/// One problem: a formal statement paired with its natural-language form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theorem {
    pub id: String,
    #[serde(default)]
    pub split: Split,
    #[serde(default)]
    pub nl_statement: String,
    /// Lean4 declaration up to the proof entry point, usually ending in `:= by`.
    pub fl_statement: String,
    #[serde(default)]
    pub imports: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
    /// Set when the NL statement is knowingly absent (annotation pending).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub nl_missing: bool,
}

impl Theorem {
    pub fn new(id: impl Into<String>, nl: impl Into<String>, fl: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            split: Split::Custom,
            nl_statement: nl.into(),
            fl_statement: fl.into(),
            imports: Vec::new(),
            tags: Vec::new(),
            nl_missing: false,
        }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Name declared by `fl_statement` (the token after `theorem`/`lemma`).
    pub fn declaration_name(&self) -> Option<&str> {
        declaration_name(&self.fl_statement)
    }
}

/// Name following the first `theorem` or `lemma` keyword in `source`.
pub fn declaration_name(source: &str) -> Option<&str> {
    let mut tokens = source.split_whitespace();
    while let Some(tok) = tokens.next() {
        if tok == "theorem" || tok == "lemma" {
            return tokens
                .next()
                .map(|name| name.split(['(', ':', '{', '[']).next().unwrap_or(name));
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

/// Coarse classification of a verifier message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    UnsolvedGoals,
    TypeMismatch,
    UnexpectedToken,
    UnknownIdentifier,
    Timeout,
    /// Proof relies on `sorry`; always fatal.
    ContainsSorry,
    Other,
}

impl DiagnosticKind {
    /// First-match substring table.
    pub fn classify(message: &str) -> Self {
        const RULES: &[(&str, DiagnosticKind)] = &[
            ("unsolved goals", DiagnosticKind::UnsolvedGoals),
            ("type mismatch", DiagnosticKind::TypeMismatch),
            ("unexpected token", DiagnosticKind::UnexpectedToken),
            ("unknown identifier", DiagnosticKind::UnknownIdentifier),
            ("unknown constant", DiagnosticKind::UnknownIdentifier),
            ("deterministic timeout", DiagnosticKind::Timeout),
            ("maxHeartbeats", DiagnosticKind::Timeout),
            ("heartbeats", DiagnosticKind::Timeout),
            ("deadline", DiagnosticKind::Timeout),
            ("timed out", DiagnosticKind::Timeout),
            ("declaration uses 'sorry'", DiagnosticKind::ContainsSorry),
            ("contains `sorry`", DiagnosticKind::ContainsSorry),
        ];
        RULES
            .iter()
            .find(|(needle, _)| message.contains(needle))
            .map(|(_, kind)| *kind)
            .unwrap_or(DiagnosticKind::Other)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: Option<u32>,
    pub column: Option<u32>,
    pub severity: Severity,
    pub message: String,
    pub kind: DiagnosticKind,
}

impl Diagnostic {
    /// Error-severity diagnostic whose kind is derived from the message.
    pub fn error(line: Option<u32>, message: impl Into<String>) -> Self {
        Self::new(line, None, Severity::Error, message)
    }

    pub fn new(
        line: Option<u32>,
        column: Option<u32>,
        severity: Severity,
        message: impl Into<String>,
    ) -> Self {
        let message = message.into();
        let kind = DiagnosticKind::classify(&message);
        Self {
            line,
            column,
            severity,
            message,
            kind,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Pass,
    Fail,
    Timeout,
    ParseError,
    VerifierError,
}

impl fmt::Display for VerdictStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VerdictStatus::Pass => "pass",
            VerdictStatus::Fail => "fail",
            VerdictStatus::Timeout => "timeout",
            VerdictStatus::ParseError => "parse_error",
            VerdictStatus::VerifierError => "verifier_error",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub diagnostics: Vec<Diagnostic>,
    /// Seconds spent in verification.
    #[serde(default)]
    pub wall_time: f64,
}

impl Verdict {
    pub fn pass() -> Self {
        Self {
            status: VerdictStatus::Pass,
            diagnostics: Vec::new(),
            wall_time: 0.0,
        }
    }

    pub fn fail(diagnostics: Vec<Diagnostic>) -> Self {
        Self {
            status: VerdictStatus::Fail,
            diagnostics,
            wall_time: 0.0,
        }
    }

    pub fn with_status(status: VerdictStatus, diagnostics: Vec<Diagnostic>) -> Self {
        Self {
            status,
            diagnostics,
            wall_time: 0.0,
        }
    }

    pub fn is_pass(&self) -> bool {
        self.status == VerdictStatus::Pass
    }

    pub fn error_count(&self) -> usize {
        self.diagnostics.iter().filter(|d| d.is_error()).count()
    }

    /// Checks the status/diagnostics consistency rules.
    pub fn is_consistent(&self) -> bool {
        match self.status {
            VerdictStatus::Pass => self.error_count() == 0,
            VerdictStatus::Fail => !self.diagnostics.is_empty(),
            _ => true,
        }
    }
}

/// Replay-order key of an attempt. Orders by theorem id, then round, then sample.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttemptKey {
    pub theorem_id: String,
    pub round: u32,
    pub sample_index: u32,
}

impl AttemptKey {
    pub fn new(theorem_id: impl Into<String>, round: u32, sample_index: u32) -> Self {
        Self {
            theorem_id: theorem_id.into(),
            round,
            sample_index,
        }
    }
}

impl fmt::Display for AttemptKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}#r{}s{}",
            self.theorem_id, self.round, self.sample_index
        )
    }
}

/// One generation event and its verification outcome. Serializes to one
/// attempt-log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub theorem_id: String,
    /// 0 is the prover stage; r >= 1 is correction round r.
    pub round: u32,
    pub sample_index: u32,
    pub prompt_hash: String,
    pub raw_output: String,
    pub extracted_proof: Option<String>,
    #[serde(flatten)]
    pub verdict: Verdict,
    pub tokens_generated: u64,
    /// The failed attempt this one repairs.
    pub parent: Option<AttemptKey>,
    /// Correction-round attempt that used a fresh prover prompt because no
    /// usable failure existed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

impl Attempt {
    pub fn key(&self) -> AttemptKey {
        AttemptKey::new(self.theorem_id.clone(), self.round, self.sample_index)
    }

    pub fn status(&self) -> VerdictStatus {
        self.verdict.status
    }

    pub fn is_pass(&self) -> bool {
        self.verdict.is_pass()
    }

    pub fn error_count(&self) -> usize {
        self.verdict.error_count()
    }
}

/// Sampling plan: `x` prover samples, then `k` correction rounds of `y` samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Budget {
    pub x: u32,
    pub k: u32,
    pub y: u32,
}

impl Budget {
    pub fn new(x: u32, k: u32, y: u32) -> Self {
        Self { x, k, y }
    }

    /// Budget with the corrector width defaulted to half the prover width.
    pub fn with_default_y(x: u32, k: u32) -> Self {
        Self {
            x,
            k,
            y: x.div_ceil(2),
        }
    }

    /// Upper bound on generated attempts for a single theorem.
    pub fn per_theorem_cap(&self) -> u64 {
        u64::from(self.x) + u64::from(self.k) * u64::from(self.y)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.x == 0 {
            return Err("budget.x must be >= 1".into());
        }
        if self.y == 0 {
            return Err("budget.y must be >= 1".into());
        }
        Ok(())
    }
}

/// Renders as `x + y × k`, the notation used in result tables.
impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.k == 0 {
            write!(f, "pass@{}", self.x)
        } else {
            write!(f, "{} + {} × {}", self.x, self.y, self.k)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid budget {input:?}: {reason}")]
pub struct BudgetParseError {
    pub input: String,
    pub reason: String,
}

/// Parses `X+KxY` (e.g. `64+2x32`), `X+K` (y defaults to ceil(x/2)) or `X`.
impl FromStr for Budget {
    type Err = BudgetParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| BudgetParseError {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let num = |t: &str, what: &str| -> Result<u32, BudgetParseError> {
            t.parse::<u32>()
                .map_err(|_| err(&format!("{what} is not a non-negative integer")))
        };
        let budget = match compact.split_once('+') {
            None => Budget::with_default_y(num(&compact, "x")?, 0),
            Some((x, rest)) => {
                let x = num(x, "x")?;
                match rest.split_once(['x', 'X', '×', '*']) {
                    Some((k, y)) => Budget::new(x, num(k, "k")?, num(y, "y")?),
                    None => Budget::with_default_y(x, num(rest, "k")?),
                }
            }
        };
        budget.validate().map_err(|r| err(&r))?;
        Ok(budget)
    }
}

/// Summary of samples requested versus actually generated in one round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundAccounting {
    pub round: u32,
    pub theorems: u64,
    pub nominal_samples: u64,
    pub generated_samples: u64,
    pub fallback_samples: u64,
}

impl RoundAccounting {
    pub fn skipped_samples(&self) -> u64 {
        self.nominal_samples.saturating_sub(self.generated_samples)
    }
}

/// Complete record of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub problem_set_id: String,
    pub budget: Budget,
    pub problems: Vec<Theorem>,
    pub attempts: Vec<Attempt>,
    /// theorem id → key of the earliest passing attempt.
    pub solved: BTreeMap<String, AttemptKey>,
    pub rounds: Vec<RoundAccounting>,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub config_fingerprint: String,
}

impl RunReport {
    pub fn total(&self) -> usize {
        self.problems.len()
    }

    /// Sorts attempts into replay order.
    pub fn sort_attempts(&mut self) {
        self.attempts.sort_by_key(Attempt::key);
    }

    pub fn attempt(&self, key: &AttemptKey) -> Option<&Attempt> {
        self.attempts
            .binary_search_by(|a| a.key().cmp(key))
            .ok()
            .map(|i| &self.attempts[i])
            .or_else(|| self.attempts.iter().find(|a| &a.key() == key))
    }

    /// Rebuilds the solve map from the attempts (earliest pass per theorem
    /// in replay order).
    pub fn recompute_solved(&mut self) {
        let mut solved = BTreeMap::new();
        for a in &self.attempts {
            if a.is_pass() {
                solved
                    .entry(a.theorem_id.clone())
                    .or_insert_with(|| a.key());
            }
        }
        self.solved = solved;
    }

    /// Round in which each solved theorem first passed.
    pub fn solve_rounds(&self) -> BTreeMap<&str, u32> {
        self.solved
            .iter()
            .map(|(id, key)| (id.as_str(), key.round))
            .collect()
    }

    /// Lists invariant violations; empty when the report is well formed.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for a in &self.attempts {
            if !seen.insert(a.key()) {
                out.push(format!("duplicate attempt key {}", a.key()));
            }
            if a.round >= 1 {
                match &a.parent {
                    None if !a.fallback => out.push(format!("{} has no parent attempt", a.key())),
                    None => {}
                    Some(p) => {
                        if p.theorem_id != a.theorem_id {
                            out.push(format!("{} parent belongs to another theorem", a.key()));
                        }
                        match self.attempt(p) {
                            Some(parent) if parent.is_pass() => {
                                out.push(format!("{} repairs a passing attempt", a.key()))
                            }
                            None => out.push(format!("{} parent {} missing", a.key(), p)),
                            _ => {}
                        }
                    }
                }
            }
            if (a.status() == VerdictStatus::ParseError) != a.extracted_proof.is_none() {
                out.push(format!("{} proof/parse_error mismatch", a.key()));
            }
            if !a.verdict.is_consistent() {
                out.push(format!("{} verdict inconsistent", a.key()));
            }
        }
        for (id, key) in &self.solved {
            match self.attempt(key) {
                Some(a) if a.is_pass() && &a.theorem_id == id => {}
                _ => out.push(format!("solved entry {id} has no passing attempt")),
            }
        }
        for t in &self.problems {
            let prover = self
                .attempts
                .iter()
                .filter(|a| a.theorem_id == t.id && a.round == 0)
                .count();
            if prover as u64 > u64::from(self.budget.x) {
                out.push(format!("{} exceeds prover budget", t.id));
            }
        }
        out
    }
}

/// One broken rule in a problem set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub theorem_id: String,
    pub rule: ViolationRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationRule {
    EmptyId,
    DuplicateId,
    EmptyFormalStatement,
    EmptyNaturalStatement,
    TrailingNewline,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rule = match self.rule {
            ViolationRule::EmptyId => "id is empty",
            ViolationRule::DuplicateId => "duplicate id",
            ViolationRule::EmptyFormalStatement => "fl_statement is empty",
            ViolationRule::EmptyNaturalStatement => {
                "nl_statement is empty but the theorem is not flagged nl_missing"
            }
            ViolationRule::TrailingNewline => "fl_statement ends with a line break",
        };
        write!(f, "{:?}: {rule}", self.theorem_id)
    }
}

/// Checks every theorem invariant; returns one entry per broken rule.
pub fn validate_problem_set(theorems: &[Theorem]) -> Vec<Violation> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut push = |id: &str, rule| {
        out.push(Violation {
            theorem_id: id.to_string(),
            rule,
        })
    };
    for t in theorems {
        if t.id.is_empty() {
            push(&t.id, ViolationRule::EmptyId);
        } else if !seen.insert(t.id.as_str()) {
            push(&t.id, ViolationRule::DuplicateId);
        }
        if t.fl_statement.trim().is_empty() {
            push(&t.id, ViolationRule::EmptyFormalStatement);
        } else if t.fl_statement.ends_with('\n') {
            push(&t.id, ViolationRule::TrailingNewline);
        }
        if t.nl_statement.trim().is_empty() && !t.nl_missing {
            push(&t.id, ViolationRule::EmptyNaturalStatement);
        }
    }
    out
}
