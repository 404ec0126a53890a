//! Accuracy, per-round cumulative accuracy, split averages and token
//! accounting, all recomputed from a [`RunReport`].
//!
//! Percentages are rendered from exact integer ratios with half-up rounding
//! to two decimals, so `149/244` prints as `61.07%` on every platform.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{Budget, RunReport};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("report contains no generated attempts")]
    EmptyReport,
    #[error("reports cover different problem sets: {0:?} and {1:?}")]
    MismatchedProblemSets(String, String),
    #[error("nothing to merge")]
    NothingToMerge,
}

/// Exact non-negative rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u128,
    pub den: u128,
}

impl Ratio {
    pub fn new(num: u128, den: u128) -> Self {
        assert!(den > 0, "zero denominator");
        Self { num, den }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `value × scale` rounded half-up to an integer.
    pub fn round_scaled(self, scale: u128) -> u128 {
        (self.num * scale * 2 + self.den) / (self.den * 2)
    }

    /// Renders `self × 100` with two decimals and a percent sign.
    pub fn percent(self) -> String {
        let h = self.round_scaled(10_000);
        format!("{}.{:02}%", h / 100, h % 100)
    }

    /// Renders the value itself with two decimals.
    pub fn two_decimals(self) -> String {
        let h = self.round_scaled(100);
        format!("{}.{:02}", h / 100, h % 100)
    }
}

/// `solved / total` as a percent string, e.g. `render_percent(149, 244)` is `"61.07%"`.
pub fn render_percent(solved: u64, total: u64) -> String {
    if total == 0 {
        return "0.00%".into();
    }
    Ratio::new(u128::from(solved), u128::from(total)).percent()
}

/// Inverse of [`render_percent`]: the percentage value of a rendered string.
pub fn parse_percent(s: &str) -> Option<f64> {
    s.trim().strip_suffix('%')?.trim().parse().ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub solved: u64,
    pub total: u64,
}

impl Accuracy {
    pub fn new(solved: u64, total: u64) -> Self {
        Self { solved, total }
    }

    pub fn ratio(&self) -> Ratio {
        Ratio::new(u128::from(self.solved), u128::from(self.total.max(1)))
    }

    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.solved as f64 / self.total as f64
        }
    }

    pub fn percent(&self) -> String {
        render_percent(self.solved, self.total)
    }
}

impl fmt::Display for Accuracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{} ({})", self.solved, self.total, self.percent())
    }
}

pub fn accuracy(report: &RunReport) -> Accuracy {
    Accuracy::new(report.solved.len() as u64, report.total() as u64)
}

/// Map theorem id → round of first pass; the lattice that merges operate on.
pub type SolveMap = BTreeMap<String, u32>;

pub fn solve_map(report: &RunReport) -> SolveMap {
    report
        .solved
        .iter()
        .map(|(id, key)| (id.clone(), key.round))
        .collect()
}

/// Union of solve sets keeping the earliest round per theorem. Commutative,
/// associative and idempotent.
pub fn merge_solve_maps(a: &SolveMap, b: &SolveMap) -> SolveMap {
    let mut out = a.clone();
    for (id, &r) in b {
        out.entry(id.clone())
            .and_modify(|cur| *cur = (*cur).min(r))
            .or_insert(r);
    }
    out
}

/// Solved counts after each round `0..rounds`, cumulative.
pub fn cumulative_counts(solves: &SolveMap, rounds: u32) -> Vec<u64> {
    let mut per_round = vec![0u64; rounds as usize];
    for &r in solves.values() {
        if let Some(slot) = per_round.get_mut(r as usize) {
            *slot += 1;
        }
    }
    let mut acc = 0;
    per_round
        .into_iter()
        .map(|c| {
            acc += c;
            acc
        })
        .collect()
}

/// Number of round slots a report covers: the prover stage plus `k`
/// correction rounds, widened if the log holds later rounds.
fn round_slots(report: &RunReport) -> u32 {
    let logged = report
        .attempts
        .iter()
        .map(|a| a.round + 1)
        .max()
        .unwrap_or(1);
    (report.budget.k + 1).max(logged)
}

/// Accuracy after the prover stage and after each correction round.
pub fn cumulative_by_round(report: &RunReport) -> Vec<Accuracy> {
    let total = report.total() as u64;
    cumulative_counts(&solve_map(report), round_slots(report))
        .into_iter()
        .map(|c| Accuracy::new(c, total))
        .collect()
}

/// Exact mean of `tokens_generated` over generated attempts.
pub fn avg_tokens_ratio(report: &RunReport) -> Result<Ratio, MetricsError> {
    mean_tokens(report.attempts.iter().map(|a| a.tokens_generated))
}

pub fn mean_tokens(tokens: impl IntoIterator<Item = u64>) -> Result<Ratio, MetricsError> {
    let (sum, n) = tokens
        .into_iter()
        .fold((0u128, 0u128), |(s, n), t| (s + u128::from(t), n + 1));
    if n == 0 {
        return Err(MetricsError::EmptyReport);
    }
    Ok(Ratio::new(sum, n))
}

pub fn avg_tokens(report: &RunReport) -> Result<f64, MetricsError> {
    avg_tokens_ratio(report).map(Ratio::to_f64)
}

/// Unweighted mean of split accuracies (e.g. valid and test).
pub fn average_accuracy(splits: &[Accuracy]) -> Option<Ratio> {
    if splits.is_empty() || splits.iter().any(|a| a.total == 0) {
        return None;
    }
    // sum of s_i/t_i over m, kept exact
    let den_all: u128 = splits.iter().map(|a| u128::from(a.total)).product();
    let num: u128 = splits
        .iter()
        .map(|a| u128::from(a.solved) * (den_all / u128::from(a.total)))
        .sum();
    Some(Ratio::new(num, den_all * splits.len() as u128))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub problem_set_id: String,
    pub total: u64,
    /// Index 0 is the prover stage; cumulative.
    pub solved_by_round: Vec<u64>,
    pub accuracy_by_round: Vec<f64>,
    pub percent_by_round: Vec<String>,
    pub accuracy: String,
    /// Absent when no attempt was generated.
    pub avg_tokens_generated: Option<f64>,
    pub avg_tokens_rendered: Option<String>,
    pub generated_attempts: u64,
    pub budget_echo: Budget,
    pub budget_label: String,
}

impl MetricsSummary {
    fn build(
        problem_set_id: &str,
        total: u64,
        solves: &SolveMap,
        rounds: u32,
        tokens: Result<Ratio, MetricsError>,
        generated: u64,
        budget: Budget,
    ) -> Self {
        let solved_by_round = cumulative_counts(solves, rounds);
        let accs: Vec<Accuracy> = solved_by_round
            .iter()
            .map(|&c| Accuracy::new(c, total))
            .collect();
        let final_acc = Accuracy::new(solves.len() as u64, total);
        Self {
            problem_set_id: problem_set_id.to_string(),
            total,
            accuracy_by_round: accs.iter().map(Accuracy::fraction).collect(),
            percent_by_round: accs.iter().map(Accuracy::percent).collect(),
            solved_by_round,
            accuracy: final_acc.percent(),
            avg_tokens_generated: tokens.as_ref().ok().map(|r| r.to_f64()),
            avg_tokens_rendered: tokens.ok().map(Ratio::two_decimals),
            generated_attempts: generated,
            budget_label: budget.to_string(),
            budget_echo: budget,
        }
    }

    pub fn from_report(report: &RunReport) -> Self {
        Self::build(
            &report.problem_set_id,
            report.total() as u64,
            &solve_map(report),
            round_slots(report),
            avg_tokens_ratio(report),
            report.attempts.len() as u64,
            report.budget,
        )
    }

    pub fn final_accuracy(&self) -> Accuracy {
        Accuracy::new(*self.solved_by_round.last().unwrap_or(&0), self.total)
    }
}

/// A theorem counts as solved if any report solved it.
pub fn merge_cumulative(reports: &[&RunReport]) -> Result<MetricsSummary, MetricsError> {
    let first = reports.first().ok_or(MetricsError::NothingToMerge)?;
    for r in &reports[1..] {
        if r.problem_set_id != first.problem_set_id {
            return Err(MetricsError::MismatchedProblemSets(
                first.problem_set_id.clone(),
                r.problem_set_id.clone(),
            ));
        }
    }
    let solves = reports.iter().fold(SolveMap::new(), |acc, r| {
        merge_solve_maps(&acc, &solve_map(r))
    });
    let rounds = reports.iter().map(|r| round_slots(r)).max().unwrap_or(1);
    let tokens = mean_tokens(
        reports
            .iter()
            .flat_map(|r| r.attempts.iter().map(|a| a.tokens_generated)),
    );
    let generated = reports.iter().map(|r| r.attempts.len() as u64).sum();
    let budget = first.budget;
    Ok(MetricsSummary::build(
        &first.problem_set_id,
        first.total() as u64,
        &solves,
        rounds,
        tokens,
        generated,
        budget,
    ))
}

fn round_label(r: usize) -> String {
    if r == 0 {
        "prover".into()
    } else {
        format!("round {r}")
    }
}

/// Plain-text summary: budget header, cumulative accuracy per round, final
/// accuracy and token mean.
pub fn render_summary(s: &MetricsSummary) -> String {
    let mut out = format!(
        "problem set: {}\nbudget: {}\n\n{:<10} {:>9} {:>9}\n",
        s.problem_set_id, s.budget_label, "stage", "solved", "accuracy"
    );
    for (r, (c, p)) in s
        .solved_by_round
        .iter()
        .zip(&s.percent_by_round)
        .enumerate()
    {
        out.push_str(&format!(
            "{:<10} {:>9} {:>9}\n",
            round_label(r),
            format!("{c}/{}", s.total),
            p
        ));
    }
    out.push_str(&format!("\naccuracy: {}\n", s.accuracy));
    match &s.avg_tokens_rendered {
        Some(t) => out.push_str(&format!(
            "avg tokens generated: {t} over {} attempts\n",
            s.generated_attempts
        )),
        None => out.push_str("avg tokens generated: n/a (no attempts)\n"),
    }
    out
}

/// One row of a split-accuracy table.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitRow {
    pub label: String,
    pub budget: String,
    pub splits: Vec<Accuracy>,
}

/// Rows of `label | budget | split... | Average`.
pub fn render_split_table(headers: &[&str], rows: &[SplitRow]) -> String {
    let label_w = rows
        .iter()
        .map(|r| r.label.chars().count())
        .chain([6])
        .max()
        .unwrap_or(6);
    let budget_w = rows
        .iter()
        .map(|r| r.budget.chars().count())
        .chain([6])
        .max()
        .unwrap_or(6);
    let mut out = format!("{:<label_w$}  {:<budget_w$}", "method", "budget");
    for h in headers {
        out.push_str(&format!("  {h:>8}"));
    }
    out.push_str(&format!("  {:>8}\n", "Average"));
    for row in rows {
        out.push_str(&format!(
            "{:<label_w$}  {:<budget_w$}",
            row.label, row.budget
        ));
        for a in &row.splits {
            out.push_str(&format!("  {:>8}", a.percent()));
        }
        let avg = average_accuracy(&row.splits).map_or("-".into(), Ratio::percent);
        out.push_str(&format!("  {avg:>8}\n"));
    }
    out
}

/// Rows of `label | prover | round 1 | ...` over cumulative counts.
pub fn render_round_table(rows: &[(String, Vec<Accuracy>)]) -> String {
    let width = rows.iter().map(|(_, a)| a.len()).max().unwrap_or(0);
    let label_w = rows
        .iter()
        .map(|(l, _)| l.chars().count())
        .chain([6])
        .max()
        .unwrap_or(6);
    let mut out = format!("{:<label_w$}", "method");
    for r in 0..width {
        out.push_str(&format!("  {:>8}", round_label(r)));
    }
    out.push('\n');
    for (label, accs) in rows {
        out.push_str(&format!("{label:<label_w$}"));
        for a in accs {
            out.push_str(&format!("  {:>8}", a.percent()));
        }
        out.push('\n');
    }
    out
}
