//! The prover/corrector loop: `x` prover samples per theorem, then `k`
//! correction rounds of `y` samples for whatever is still unsolved.
//!
//! Theorems run in parallel on a bounded worker pool. Workers only read the
//! state of the previous round and send finished attempts over a channel; the
//! collecting thread is the only writer of both the state and the attempt log.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::llm::{GenerationRequest, Generator, LlmError, RequestKey, SamplingParams};
use crate::metrics::MetricsSummary;
use crate::model::{
    validate_problem_set, Attempt, AttemptKey, Budget, Diagnostic, RoundAccounting, RunReport,
    Theorem, Verdict, VerdictStatus,
};
use crate::parse::{parse_model_output_for, Rejection};
use crate::prompt::{PromptEngine, PromptError, RenderedPrompt};
use crate::verifier::{Verifier, VerifierError};

pub const PROBLEMS_FILE: &str = "problems.ndjson";
pub const ATTEMPTS_FILE: &str = "attempts.ndjson";
pub const CONFIG_FILE: &str = "config.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub problem_set_id: String,
    pub budget: Budget,
    /// `n` is ignored; request sizes come from the budget and `batch_size`.
    pub sampling: SamplingParams,
    pub workers: usize,
    /// Samples requested per generation call.
    pub batch_size: u32,
    /// Stop sampling a theorem within a stage once it passes.
    pub early_exit: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            problem_set_id: "problems".into(),
            budget: Budget::new(64, 2, 32),
            sampling: SamplingParams::default(),
            workers: 4,
            batch_size: 1,
            early_exit: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("generation failed: {0}")]
    Backend(#[from] LlmError),
    #[error("verification failed: {0}")]
    Verifier(#[from] VerifierError),
    #[error("prompt rendering failed: {0}")]
    Prompt(#[from] PromptError),
    #[error("attempt log: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid problem set: {}", .0.join("; "))]
    InvalidProblems(Vec<String>),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("interrupted")]
    Interrupted,
}

/// Error plus everything finished before it; the attempt log on disk holds
/// the same attempts.
#[derive(Debug)]
pub struct PipelineFailure {
    pub error: PipelineError,
    pub partial: RunReport,
}

impl std::fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} ({} attempts checkpointed)",
            self.error,
            self.partial.attempts.len()
        )
    }
}

impl std::error::Error for PipelineFailure {}

/// Mutable run state; only touched at round boundaries.
#[derive(Debug, Clone, Default)]
pub struct PipelineState {
    /// Next round to run; 0 before the prover stage.
    pub round: u32,
    pub theorems: Vec<String>,
    pub unsolved: BTreeSet<String>,
    pub solved: BTreeMap<String, AttemptKey>,
    pub attempts: BTreeMap<AttemptKey, Attempt>,
    pub per_theorem_best_failure: BTreeMap<String, AttemptKey>,
    pub rounds: Vec<RoundAccounting>,
}

impl PipelineState {
    pub fn new(theorems: &[Theorem]) -> Self {
        Self {
            theorems: theorems.iter().map(|t| t.id.clone()).collect(),
            unsolved: theorems.iter().map(|t| t.id.clone()).collect(),
            ..Default::default()
        }
    }

    pub fn attempts_so_far(&self) -> usize {
        self.attempts.len()
    }

    /// Attempts of one theorem in replay order.
    pub fn history<'a>(&'a self, theorem_id: &'a str) -> impl Iterator<Item = &'a Attempt> + 'a {
        self.attempts
            .range(AttemptKey::new(theorem_id, 0, 0)..)
            .take_while(move |(k, _)| k.theorem_id == theorem_id)
            .map(|(_, a)| a)
    }

    fn absorb(&mut self, attempt: Attempt) {
        let key = attempt.key();
        if attempt.is_pass() {
            let entry = self
                .solved
                .entry(attempt.theorem_id.clone())
                .or_insert_with(|| key.clone());
            if key < *entry {
                *entry = key.clone();
            }
            self.unsolved.remove(&attempt.theorem_id);
        }
        self.attempts.insert(key, attempt);
    }

    fn refresh_best_failures(&mut self) {
        let mut best = BTreeMap::new();
        for id in &self.unsolved {
            if let Selection::Failure(a) = select_failed_attempt(self.history(id)) {
                best.insert(id.clone(), a.key());
            }
        }
        self.per_theorem_best_failure = best;
    }

    /// Boundary invariants: disjoint solved/unsolved sets that cover every
    /// theorem.
    pub fn check_boundary(&self) -> Vec<String> {
        let mut out = Vec::new();
        for id in &self.unsolved {
            if self.solved.contains_key(id) {
                out.push(format!("{id} is both solved and unsolved"));
            }
        }
        if self.solved.len() + self.unsolved.len() != self.theorems.len() {
            out.push(format!(
                "conservation broken: {} solved + {} unsolved != {} theorems",
                self.solved.len(),
                self.unsolved.len(),
                self.theorems.len()
            ));
        }
        out
    }
}

/// Which failure the corrector sees next.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection<'a> {
    Failure(&'a Attempt),
    /// No usable failure: use a fresh prover prompt; `parent` is the latest
    /// unusable attempt, if any.
    Fallback {
        parent: Option<AttemptKey>,
    },
}

fn usable(a: &Attempt) -> bool {
    matches!(a.status(), VerdictStatus::Fail | VerdictStatus::Timeout)
        && a.extracted_proof.is_some()
        && !a.verdict.diagnostics.is_empty()
}

/// Fewest error diagnostics wins; ties go to the latest round, then the
/// lowest sample index. Parse errors are never selected.
pub fn select_failed_attempt<'a>(history: impl IntoIterator<Item = &'a Attempt>) -> Selection<'a> {
    let mut best: Option<&Attempt> = None;
    let mut latest_other: Option<&Attempt> = None;
    let rank = |a: &Attempt| (a.error_count(), std::cmp::Reverse(a.round), a.sample_index);
    for a in history {
        if a.is_pass() {
            continue;
        }
        if usable(a) {
            if best.is_none_or(|b| rank(a) < rank(b)) {
                best = Some(a);
            }
        } else if latest_other.is_none_or(|o| {
            (std::cmp::Reverse(a.round), a.sample_index)
                < (std::cmp::Reverse(o.round), o.sample_index)
        }) {
            latest_other = Some(a);
        }
    }
    match best {
        Some(a) => Selection::Failure(a),
        None => Selection::Fallback {
            parent: latest_other.map(Attempt::key),
        },
    }
}

/// Append-only attempt log, one JSON object per line.
pub struct AttemptLog {
    out: BufWriter<File>,
}

impl AttemptLog {
    pub fn append_to(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            out: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, attempt: &Attempt) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, attempt)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

/// Reads an attempt log. A torn final line (from an interrupted write) is
/// dropped with a warning; a bad line elsewhere is an error.
pub fn read_attempt_log(path: &Path) -> std::io::Result<Vec<Attempt>> {
    let reader = BufReader::new(File::open(path)?);
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Attempt>(line) {
            Ok(a) => out.push(a),
            Err(e) if Some(i) == last => {
                log::warn!(
                    "{}:{}: dropping torn final line ({e})",
                    path.display(),
                    i + 1
                );
            }
            Err(e) => {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}:{}: {e}", path.display(), i + 1),
                ))
            }
        }
    }
    Ok(out)
}

pub fn write_attempts(path: &Path, attempts: &[Attempt]) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for a in attempts {
        serde_json::to_writer(&mut out, a)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Short content hash of a JSON value (keys are sorted by serde_json's map).
pub fn fingerprint(value: &serde_json::Value) -> String {
    let digest = Sha256::digest(value.to_string().as_bytes());
    hex::encode(&digest[..8])
}

enum Msg {
    Attempt(Box<Attempt>),
    Failed(PipelineError),
}

struct Task<'t> {
    theorem: &'t Theorem,
    prompt: RenderedPrompt,
    parent: Option<AttemptKey>,
    fallback: bool,
}

/// Runs the loop for one problem set.
pub struct Pipeline<'a> {
    pub config: PipelineConfig,
    pub engine: &'a PromptEngine,
    pub generator: &'a dyn Generator,
    pub verifier: &'a dyn Verifier,
    /// Append-only checkpoint log.
    pub log_path: Option<PathBuf>,
    /// Attempts from an earlier, interrupted run; their keys are not regenerated.
    pub resume: BTreeMap<AttemptKey, Attempt>,
    pub cancel: Arc<AtomicBool>,
    /// Called at every round boundary (after the prover stage and each round).
    #[allow(clippy::type_complexity)]
    pub observer: Option<Box<dyn Fn(&PipelineState) + Send + Sync + 'a>>,
    pub config_fingerprint: Option<String>,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        config: PipelineConfig,
        engine: &'a PromptEngine,
        generator: &'a dyn Generator,
        verifier: &'a dyn Verifier,
    ) -> Self {
        Self {
            config,
            engine,
            generator,
            verifier,
            log_path: None,
            resume: BTreeMap::new(),
            cancel: Arc::new(AtomicBool::new(false)),
            observer: None,
            config_fingerprint: None,
        }
    }

    pub fn with_resume(mut self, attempts: Vec<Attempt>) -> Self {
        self.resume = attempts.into_iter().map(|a| (a.key(), a)).collect();
        self
    }

    pub fn fingerprint(&self) -> String {
        self.config_fingerprint.clone().unwrap_or_else(|| {
            fingerprint(&serde_json::json!({
                "pipeline": self.config,
                "templates": self.engine.templates.digest(),
            }))
        })
    }

    fn validate(&self, theorems: &[Theorem]) -> Result<(), PipelineError> {
        self.config
            .budget
            .validate()
            .map_err(PipelineError::Config)?;
        if self.config.workers == 0 {
            return Err(PipelineError::Config("workers must be >= 1".into()));
        }
        if self.config.batch_size == 0 {
            return Err(PipelineError::Config("batch_size must be >= 1".into()));
        }
        let violations = validate_problem_set(theorems);
        if !violations.is_empty() {
            return Err(PipelineError::InvalidProblems(
                violations.iter().map(ToString::to_string).collect(),
            ));
        }
        Ok(())
    }

    /// Prover stage then up to `k` correction rounds.
    pub fn run(&self, theorems: &[Theorem]) -> Result<RunReport, Box<PipelineFailure>> {
        let started = Utc::now();
        let mut state = PipelineState::new(theorems);
        let result = self.validate(theorems).and_then(|()| {
            let mut log = match &self.log_path {
                Some(p) => Some(AttemptLog::append_to(p)?),
                None => None,
            };
            self.run_prover_stage(theorems, &mut state, log.as_mut())?;
            for _ in 0..self.config.budget.k {
                self.run_correction_round(theorems, &mut state, log.as_mut())?;
            }
            Ok(())
        });
        let report = self.report(theorems, &state, started);
        match result {
            Ok(()) => Ok(report),
            Err(error) => Err(Box::new(PipelineFailure {
                error,
                partial: report,
            })),
        }
    }

    pub fn report(
        &self,
        theorems: &[Theorem],
        state: &PipelineState,
        started: DateTime<Utc>,
    ) -> RunReport {
        let mut report = RunReport {
            problem_set_id: self.config.problem_set_id.clone(),
            budget: self.config.budget,
            problems: theorems.to_vec(),
            attempts: state.attempts.values().cloned().collect(),
            solved: BTreeMap::new(),
            rounds: state.rounds.clone(),
            started,
            finished: Utc::now(),
            config_fingerprint: self.fingerprint(),
        };
        report.recompute_solved();
        report
    }

    /// Round 0: `x` samples from the prover prompt for every theorem.
    pub fn run_prover_stage(
        &self,
        theorems: &[Theorem],
        state: &mut PipelineState,
        log: Option<&mut AttemptLog>,
    ) -> Result<(), PipelineError> {
        let mut tasks = Vec::new();
        for t in theorems.iter().filter(|t| state.unsolved.contains(&t.id)) {
            tasks.push(Task {
                theorem: t,
                prompt: self.engine.render_prover_prompt(t)?,
                parent: None,
                fallback: false,
            });
        }
        self.run_round(0, self.config.budget.x, tasks, state, log)
    }

    /// One correction round over the theorems still unsolved.
    pub fn run_correction_round(
        &self,
        theorems: &[Theorem],
        state: &mut PipelineState,
        log: Option<&mut AttemptLog>,
    ) -> Result<(), PipelineError> {
        let round = state.round;
        let mut tasks = Vec::new();
        for t in theorems.iter().filter(|t| state.unsolved.contains(&t.id)) {
            let history: Vec<Attempt> = state.history(&t.id).cloned().collect();
            let task = match select_failed_attempt(&history) {
                Selection::Failure(failed) => Task {
                    theorem: t,
                    prompt: self.engine.render_corrector_prompt(t, failed, &history)?,
                    parent: Some(failed.key()),
                    fallback: false,
                },
                Selection::Fallback { parent } => {
                    log::info!(
                        "{}: no usable failure for round {round}; using prover prompt",
                        t.id
                    );
                    Task {
                        theorem: t,
                        prompt: self.engine.render_prover_prompt(t)?,
                        parent,
                        fallback: true,
                    }
                }
            };
            tasks.push(task);
        }
        self.run_round(round, self.config.budget.y, tasks, state, log)
    }

    fn run_round(
        &self,
        round: u32,
        width: u32,
        tasks: Vec<Task<'_>>,
        state: &mut PipelineState,
        mut log: Option<&mut AttemptLog>,
    ) -> Result<(), PipelineError> {
        let mut acct = RoundAccounting {
            round,
            theorems: tasks.len() as u64,
            nominal_samples: tasks.len() as u64 * u64::from(width),
            ..Default::default()
        };
        let next = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);
        let workers = self.config.workers.min(tasks.len()).max(1);
        let (tx, rx) = mpsc::channel::<Msg>();
        let mut first_error = None;
        std::thread::scope(|s| {
            for _ in 0..workers {
                let tx = tx.clone();
                let (tasks, next, stop) = (&tasks, &next, &stop);
                s.spawn(move || loop {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(task) = tasks.get(i) else { break };
                    if let Err(e) = self.sample_theorem(round, width, task, &tx) {
                        stop.store(true, Ordering::SeqCst);
                        let _ = tx.send(Msg::Failed(e));
                        break;
                    }
                });
            }
            drop(tx);
            for msg in rx {
                match msg {
                    Msg::Attempt(a) => {
                        if let Some(log) = log.as_deref_mut() {
                            if !self.resume.contains_key(&a.key()) {
                                if let Err(e) = log.append(&a) {
                                    stop.store(true, Ordering::SeqCst);
                                    first_error.get_or_insert(PipelineError::Io(e));
                                }
                            }
                        }
                        acct.generated_samples += 1;
                        if a.fallback {
                            acct.fallback_samples += 1;
                        }
                        state.absorb(*a);
                    }
                    Msg::Failed(e) => {
                        first_error.get_or_insert(e);
                    }
                }
            }
        });
        state.rounds.push(acct);
        state.round = round + 1;
        state.refresh_best_failures();
        if let Some(obs) = &self.observer {
            obs(state);
        }
        match first_error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    fn sample_theorem(
        &self,
        round: u32,
        width: u32,
        task: &Task<'_>,
        tx: &mpsc::Sender<Msg>,
    ) -> Result<(), PipelineError> {
        let id = &task.theorem.id;
        let batch = self.config.batch_size.max(1);
        let mut i = 0;
        while i < width {
            if self.cancel.load(Ordering::SeqCst) {
                return Err(PipelineError::Interrupted);
            }
            if let Some(prev) = self.resume.get(&AttemptKey::new(id.clone(), round, i)) {
                let passed = prev.is_pass();
                let _ = tx.send(Msg::Attempt(Box::new(prev.clone())));
                i += 1;
                if passed && self.config.early_exit {
                    break;
                }
                continue;
            }
            let mut n = 1;
            while n < batch
                && i + n < width
                && !self
                    .resume
                    .contains_key(&AttemptKey::new(id.clone(), round, i + n))
            {
                n += 1;
            }
            if !self.generator.supports_batching() {
                n = 1;
            }
            let params = SamplingParams {
                n,
                ..self.config.sampling.clone()
            };
            let req = GenerationRequest {
                key: RequestKey {
                    theorem_id: id.clone(),
                    round,
                    first_sample: i,
                },
                prompt: &task.prompt,
                params: &params,
            };
            let completions = match self.generator.generate(&req) {
                Ok(c) => c,
                Err(e @ LlmError::ContextOverflow { .. }) => {
                    log::warn!("{id} round {round}: {e}; skipping remaining samples");
                    return Ok(());
                }
                Err(e) => return Err(e.into()),
            };
            if completions.len() != n as usize {
                return Err(LlmError::BadResponse(format!(
                    "asked for {n} completions, got {}",
                    completions.len()
                ))
                .into());
            }
            let prompt_hash = task.prompt.hash();
            let mut passed = false;
            for (j, c) in completions.into_iter().enumerate() {
                let parsed = parse_model_output_for(&c.text, Some(&task.theorem.fl_statement));
                let proof = parsed.submission().map(str::to_string);
                let verdict = match &proof {
                    None => Verdict::with_status(
                        VerdictStatus::ParseError,
                        vec![Diagnostic::error(None, rejection_message(parsed.rejection))],
                    ),
                    Some(p) => match self.verifier.check(task.theorem, p) {
                        Ok(v) => v,
                        Err(e @ (VerifierError::VerifierUnavailable(_) | VerifierError::Io(_))) => {
                            return Err(e.into())
                        }
                        Err(e) => Verdict::with_status(
                            VerdictStatus::VerifierError,
                            vec![Diagnostic::error(None, e.to_string())],
                        ),
                    },
                };
                passed |= verdict.is_pass();
                let attempt = Attempt {
                    theorem_id: id.clone(),
                    round,
                    sample_index: i + j as u32,
                    prompt_hash: prompt_hash.clone(),
                    raw_output: c.text,
                    extracted_proof: proof,
                    verdict,
                    tokens_generated: c.tokens_generated,
                    parent: task.parent.clone(),
                    fallback: task.fallback,
                };
                let _ = tx.send(Msg::Attempt(Box::new(attempt)));
            }
            i += n;
            if passed && self.config.early_exit {
                break;
            }
        }
        Ok(())
    }
}

fn rejection_message(r: Option<Rejection>) -> &'static str {
    match r {
        Some(Rejection::MalformedSections) => "malformed Thought/Output sections",
        Some(Rejection::ContainsSorry) => "proof contains `sorry`",
        _ => "no Lean4 code block in output",
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{0}: no run report here")]
    EmptyReport(String),
    #[error("{path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SummaryFile {
    problem_set_id: String,
    budget: Budget,
    rounds: Vec<RoundAccounting>,
    started: DateTime<Utc>,
    finished: DateTime<Utc>,
    config_fingerprint: String,
    metrics: MetricsSummary,
}

/// Writes `problems.ndjson`, `attempts.ndjson` (replay order), `config.json`
/// and `summary.json` into `dir`.
pub fn write_report_dir(
    dir: &Path,
    report: &RunReport,
    config: &serde_json::Value,
) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut problems = BufWriter::new(File::create(dir.join(PROBLEMS_FILE))?);
    for t in &report.problems {
        serde_json::to_writer(&mut problems, t)?;
        problems.write_all(b"\n")?;
    }
    problems.flush()?;
    let mut attempts = report.attempts.clone();
    attempts.sort_by_key(Attempt::key);
    write_attempts(&dir.join(ATTEMPTS_FILE), &attempts)?;
    let cfg = serde_json::json!({
        "fingerprint": report.config_fingerprint,
        "config": config,
    });
    fs::write(
        dir.join(CONFIG_FILE),
        serde_json::to_string_pretty(&cfg)? + "\n",
    )?;
    let summary = SummaryFile {
        problem_set_id: report.problem_set_id.clone(),
        budget: report.budget,
        rounds: report.rounds.clone(),
        started: report.started,
        finished: report.finished,
        config_fingerprint: report.config_fingerprint.clone(),
        metrics: MetricsSummary::from_report(report),
    };
    fs::write(
        dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(())
}

pub fn read_problems(path: &Path) -> Result<Vec<Theorem>, ReportError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(line).map_err(|e| ReportError::Corrupt {
                path: format!("{}:{}", path.display(), i + 1),
                reason: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

/// Loads a report directory written by [`write_report_dir`].
pub fn read_report_dir(dir: &Path) -> Result<RunReport, ReportError> {
    let summary_path = dir.join(SUMMARY_FILE);
    let problems_path = dir.join(PROBLEMS_FILE);
    if !summary_path.is_file() || !problems_path.is_file() {
        return Err(ReportError::EmptyReport(dir.display().to_string()));
    }
    let summary: SummaryFile =
        serde_json::from_str(&fs::read_to_string(&summary_path)?).map_err(|e| {
            ReportError::Corrupt {
                path: summary_path.display().to_string(),
                reason: e.to_string(),
            }
        })?;
    let problems = read_problems(&problems_path)?;
    let attempts_path = dir.join(ATTEMPTS_FILE);
    let attempts = if attempts_path.is_file() {
        read_attempt_log(&attempts_path)?
    } else {
        Vec::new()
    };
    if problems.is_empty() {
        return Err(ReportError::EmptyReport(dir.display().to_string()));
    }
    let mut report = RunReport {
        problem_set_id: summary.problem_set_id,
        budget: summary.budget,
        problems,
        attempts,
        solved: BTreeMap::new(),
        rounds: summary.rounds,
        started: summary.started,
        finished: summary.finished,
        config_fingerprint: summary.config_fingerprint,
    };
    report.sort_attempts();
    report.recompute_solved();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedMock;
    use crate::verifier::FnVerifier;

    fn attempt(round: u32, sample: u32, status: VerdictStatus, errors: usize) -> Attempt {
        let diags = (0..errors)
            .map(|_| Diagnostic::error(Some(1), "unsolved goals"))
            .collect();
        Attempt {
            theorem_id: "t".into(),
            round,
            sample_index: sample,
            prompt_hash: String::new(),
            raw_output: String::new(),
            extracted_proof: (status != VerdictStatus::ParseError).then(|| "simp".to_string()),
            verdict: Verdict::with_status(status, diags),
            tokens_generated: 1,
            parent: None,
            fallback: false,
        }
    }

    #[test]
    fn selection_prefers_fewest_errors() {
        let h = [
            attempt(0, 0, VerdictStatus::Fail, 3),
            attempt(0, 1, VerdictStatus::Fail, 1),
        ];
        assert_eq!(select_failed_attempt(&h), Selection::Failure(&h[1]));
    }

    #[test]
    fn selection_tie_breaks_latest_round_then_lowest_sample() {
        let h = [
            attempt(0, 0, VerdictStatus::Fail, 2),
            attempt(1, 4, VerdictStatus::Fail, 2),
            attempt(1, 2, VerdictStatus::Timeout, 2),
        ];
        assert_eq!(select_failed_attempt(&h), Selection::Failure(&h[2]));
    }

    #[test]
    fn selection_falls_back_on_parse_errors() {
        let h = [
            attempt(0, 0, VerdictStatus::ParseError, 1),
            attempt(0, 1, VerdictStatus::ParseError, 1),
        ];
        assert_eq!(
            select_failed_attempt(&h),
            Selection::Fallback {
                parent: Some(AttemptKey::new("t", 0, 0))
            }
        );
        assert_eq!(
            select_failed_attempt(&[]),
            Selection::Fallback { parent: None }
        );
    }

    fn lean(proof: &str) -> String {
        format!("<Thought>\nok\n</Thought>\n<Output>\n```lean4\n{proof}\n```\n</Output>")
    }

    #[test]
    fn early_exit_counts() {
        let engine = PromptEngine::default();
        let theorems = vec![
            Theorem::new("t1", "a", "theorem t1 : True := by"),
            Theorem::new("t2", "b", "theorem t2 : True := by"),
        ];
        let mut mock = ScriptedMock::new();
        mock.push("t1", 0, 0, lean("  trivial"));
        mock.push("t1", 0, 1, lean("  trivial"));
        mock.push("t2", 0, 0, lean("  simp"));
        mock.push("t2", 0, 1, lean("  simp"));
        let verifier = FnVerifier(|_: &Theorem, p: &str| {
            if p.contains("trivial") {
                Verdict::pass()
            } else {
                Verdict::fail(vec![Diagnostic::error(Some(1), "simp made no progress")])
            }
        });
        let config = PipelineConfig {
            budget: Budget::new(2, 0, 1),
            ..Default::default()
        };
        let report = Pipeline::new(config, &engine, &mock, &verifier)
            .run(&theorems)
            .unwrap();
        let count = |id: &str| {
            report
                .attempts
                .iter()
                .filter(|a| a.theorem_id == id)
                .count()
        };
        assert_eq!(count("t1"), 1);
        assert_eq!(count("t2"), 2);
        assert_eq!(report.rounds[0].nominal_samples, 4);
        assert_eq!(report.rounds[0].generated_samples, 3);
        assert!(report.check_invariants().is_empty());
    }

    #[test]
    fn attempt_log_line_has_fixed_fields() {
        let a = attempt(1, 2, VerdictStatus::Fail, 1);
        let v: serde_json::Value = serde_json::to_value(&a).unwrap();
        let keys: BTreeSet<_> = v.as_object().unwrap().keys().cloned().collect();
        for k in [
            "theorem_id",
            "round",
            "sample_index",
            "prompt_hash",
            "raw_output",
            "extracted_proof",
            "status",
            "diagnostics",
            "tokens_generated",
            "parent",
        ] {
            assert!(keys.contains(k), "{k}");
        }
        let back: Attempt = serde_json::from_value(v).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn torn_final_line_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.ndjson");
        let a = attempt(0, 0, VerdictStatus::Fail, 1);
        let mut text = serde_json::to_string(&a).unwrap();
        text.push('\n');
        text.push_str("{\"theorem_id\":\"t\",\"rou");
        fs::write(&path, text).unwrap();
        assert_eq!(read_attempt_log(&path).unwrap(), vec![a]);
    }
}
