//! Training-data records harvested from run reports: prove records (a
//! verified, commented proof) and correction records (a failed proof, its
//! errors, and the proof that eventually passed).

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::llm::{Generator, LlmError, RequestKey, SamplingParams};
use crate::model::{Attempt, Diagnostic, DiagnosticKind, RunReport, Theorem, VerdictStatus};
use crate::parse::{
    contains_sorry, mask_comments_and_strings, parse_model_output, parse_verifier_log,
    render_error_block, LogFormat,
};
use crate::prompt::{
    fill, full_declaration, PromptEngine, PromptError, RenderedPrompt, TrainingPair,
};
use crate::verifier::{Verifier, VerifierError};

pub const RECORDS_SCHEMA: &str = "lean-collab-records/1";
pub const TRAINING_SCHEMA: &str = "lean-collab-training/1";

/// Failures kept per theorem when harvesting correction records.
pub const DEFAULT_FAILURE_CAP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSource {
    Harvested,
    Imported,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProveRecord {
    pub theorem_id: String,
    pub fl_statement: String,
    pub commented_fl_proof: String,
    pub nl_statement: String,
    pub source: RecordSource,
    /// Natural language proof kept separately when it could not be woven in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nl_proof: Option<String>,
}

impl ProveRecord {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("theorem_id", &self.theorem_id),
            ("fl_statement", &self.fl_statement),
            ("commented_fl_proof", &self.commented_fl_proof),
            ("nl_statement", &self.nl_statement),
        ] {
            if v.trim().is_empty() {
                return Err(format!("{}: {name} is empty", self.theorem_id));
            }
        }
        if contains_sorry(&self.commented_fl_proof) {
            return Err(format!("{}: proof contains sorry", self.theorem_id));
        }
        Ok(())
    }

    /// Already carries both an NL statement and NL proof content.
    pub fn is_annotated(&self) -> bool {
        !self.nl_statement.trim().is_empty()
            && (self.nl_proof.is_some() || has_comments(&self.commented_fl_proof))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionRecord {
    pub theorem_id: String,
    pub fl_statement: String,
    pub nl_statement: String,
    pub incorrect_fl_proof: String,
    pub error_messages: Vec<Diagnostic>,
    /// The error messages as the corrector saw them (block format).
    pub error_log: String,
    pub correct_fl_proof: String,
}

impl CorrectionRecord {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("theorem_id", &self.theorem_id),
            ("fl_statement", &self.fl_statement),
            ("nl_statement", &self.nl_statement),
            ("incorrect_fl_proof", &self.incorrect_fl_proof),
            ("correct_fl_proof", &self.correct_fl_proof),
        ] {
            if v.trim().is_empty() {
                return Err(format!("{}: {name} is empty", self.theorem_id));
            }
        }
        if self.error_messages.is_empty() {
            return Err(format!("{}: error_messages is empty", self.theorem_id));
        }
        if self.incorrect_fl_proof == self.correct_fl_proof {
            return Err(format!(
                "{}: incorrect and correct proofs are identical",
                self.theorem_id
            ));
        }
        if contains_sorry(&self.correct_fl_proof) {
            return Err(format!("{}: correct proof contains sorry", self.theorem_id));
        }
        Ok(())
    }

    /// `error_log` parses back to `error_messages` (line, message and kind;
    /// the block format carries no column or severity).
    pub fn provenance_holds(&self) -> bool {
        let parsed = parse_verifier_log(&self.error_log, LogFormat::Block);
        parsed.len() == self.error_messages.len()
            && parsed
                .iter()
                .zip(&self.error_messages)
                .all(|(p, e)| p.line == e.line && p.message == e.message && p.kind == e.kind)
    }
}

/// One line of a records file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum Record {
    Prove(ProveRecord),
    Correction(CorrectionRecord),
}

impl Record {
    pub fn theorem_id(&self) -> &str {
        match self {
            Record::Prove(r) => &r.theorem_id,
            Record::Correction(r) => &r.theorem_id,
        }
    }

    /// Proof whose length stands in for difficulty.
    pub fn target_proof(&self) -> &str {
        match self {
            Record::Prove(r) => &r.commented_fl_proof,
            Record::Correction(r) => &r.correct_fl_proof,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            Record::Prove(r) => r.validate(),
            Record::Correction(r) => r.validate(),
        }
    }

    /// (line count, byte length, theorem id).
    pub fn difficulty(&self) -> (usize, usize, &str) {
        let p = self.target_proof();
        (p.lines().count(), p.len(), self.theorem_id())
    }
}

fn has_comments(src: &str) -> bool {
    src.contains("--") || src.contains("/-")
}

/// Lean code with comments and all whitespace removed, for checking that a
/// weave changed comments only.
fn code_skeleton(src: &str) -> String {
    mask_comments_and_strings(src)
        .chars()
        .zip(src.chars())
        .filter(|(m, _)| !m.is_whitespace())
        .map(|(_, c)| c)
        .collect()
}

fn usable_failure(a: &Attempt) -> bool {
    matches!(a.status(), VerdictStatus::Fail | VerdictStatus::Timeout)
        && a.extracted_proof.is_some()
        && !a.verdict.diagnostics.is_empty()
}

/// Prove records for every solved theorem (earliest pass) and correction
/// records pairing up to `failure_cap` failures per theorem with that pass.
/// Failures are ranked worst first: most error diagnostics, then earliest
/// round, then lowest sample index. Repeated incorrect proofs count once.
pub fn harvest(
    report: &RunReport,
    failure_cap: usize,
) -> (Vec<ProveRecord>, Vec<CorrectionRecord>) {
    let mut prove = Vec::new();
    let mut correct = Vec::new();
    for theorem in &report.problems {
        let Some(key) = report.solved.get(&theorem.id) else {
            continue;
        };
        let Some(pass) = report.attempt(key) else {
            continue;
        };
        let Some(pass_proof) = pass.extracted_proof.as_deref() else {
            continue;
        };
        if contains_sorry(pass_proof) {
            continue;
        }
        let correct_fl_proof = full_declaration(&theorem.fl_statement, pass_proof);
        prove.push(ProveRecord {
            theorem_id: theorem.id.clone(),
            fl_statement: theorem.fl_statement.clone(),
            commented_fl_proof: correct_fl_proof.clone(),
            nl_statement: theorem.nl_statement.clone(),
            source: RecordSource::Harvested,
            nl_proof: None,
        });

        let mut failures: Vec<&Attempt> = report
            .attempts
            .iter()
            .filter(|a| a.theorem_id == theorem.id && usable_failure(a))
            .collect();
        failures.sort_by(|a, b| {
            b.error_count()
                .cmp(&a.error_count())
                .then(a.round.cmp(&b.round))
                .then(a.sample_index.cmp(&b.sample_index))
        });
        let mut seen = HashSet::new();
        for f in failures {
            if seen.len() == failure_cap {
                break;
            }
            let incorrect =
                full_declaration(&theorem.fl_statement, f.extracted_proof.as_deref().unwrap());
            if incorrect == correct_fl_proof || !seen.insert(incorrect.clone()) {
                continue;
            }
            let error_messages = f.verdict.diagnostics.clone();
            let error_log = render_error_block(&error_messages).expect("non-empty diagnostics");
            correct.push(CorrectionRecord {
                theorem_id: theorem.id.clone(),
                fl_statement: theorem.fl_statement.clone(),
                nl_statement: theorem.nl_statement.clone(),
                incorrect_fl_proof: incorrect,
                error_messages,
                error_log,
                correct_fl_proof: correct_fl_proof.clone(),
            });
        }
    }
    (prove, correct)
}

/// Stable ascending sort by [`Record::difficulty`].
pub fn curriculum_sort(records: &mut [Record]) {
    records.sort_by(|a, b| a.difficulty().cmp(&b.difficulty()));
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("line {line}: {reason}")]
    SchemaViolation { line: usize, reason: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema_version: String,
}

fn write_header(w: &mut impl Write, version: &str) -> std::io::Result<()> {
    let h = Header {
        schema_version: version.to_string(),
    };
    writeln!(w, "{}", serde_json::to_string(&h)?)
}

fn read_header(first: Option<(usize, String)>, expected: &str) -> Result<(), DatasetError> {
    let (line, text) = first.ok_or(DatasetError::SchemaViolation {
        line: 1,
        reason: "missing schema_version header".into(),
    })?;
    let h: Header = serde_json::from_str(&text).map_err(|e| DatasetError::SchemaViolation {
        line,
        reason: format!("bad header: {e}"),
    })?;
    if h.schema_version != expected {
        return Err(DatasetError::SchemaViolation {
            line,
            reason: format!(
                "schema_version {:?}, expected {expected:?}",
                h.schema_version
            ),
        });
    }
    Ok(())
}

/// Writes a records file: header line, then one record per line.
pub fn write_records(w: &mut impl Write, records: &[Record]) -> Result<(), DatasetError> {
    for r in records {
        r.validate().map_err(DatasetError::InvalidRecord)?;
    }
    write_header(w, RECORDS_SCHEMA)?;
    for r in records {
        writeln!(
            w,
            "{}",
            serde_json::to_string(r).map_err(std::io::Error::from)?
        )?;
    }
    Ok(())
}

fn numbered_lines(r: impl BufRead) -> impl Iterator<Item = std::io::Result<(usize, String)>> {
    r.lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)))
        .filter(|l| !matches!(l, Ok((_, s)) if s.trim().is_empty()))
}

/// Reads a records file; unknown or missing fields are schema violations
/// naming the offending line.
pub fn read_records(r: impl BufRead) -> Result<Vec<Record>, DatasetError> {
    let mut lines = numbered_lines(r);
    read_header(lines.next().transpose()?, RECORDS_SCHEMA)?;
    let mut out = Vec::new();
    for l in lines {
        let (line, text) = l?;
        let rec: Record =
            serde_json::from_str(&text).map_err(|e| DatasetError::SchemaViolation {
                line,
                reason: e.to_string(),
            })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn render_training(
    engine: &PromptEngine,
    record: &Record,
) -> Result<TrainingPair, PromptError> {
    match record {
        Record::Prove(r) => engine.render_sft_example(r),
        Record::Correction(r) => engine.render_correction_example(r),
    }
}

/// Writes a training file: header line, then `{input, output}` per record.
pub fn write_training(
    w: &mut impl Write,
    engine: &PromptEngine,
    records: &[Record],
) -> Result<(), DatasetError> {
    let pairs = records
        .iter()
        .map(|r| render_training(engine, r))
        .collect::<Result<Vec<_>, _>>()?;
    write_header(w, TRAINING_SCHEMA)?;
    for p in pairs {
        writeln!(
            w,
            "{}",
            serde_json::to_string(&p).map_err(std::io::Error::from)?
        )?;
    }
    Ok(())
}

pub fn read_training(r: impl BufRead) -> Result<Vec<TrainingPair>, DatasetError> {
    let mut lines = numbered_lines(r);
    read_header(lines.next().transpose()?, TRAINING_SCHEMA)?;
    let mut out = Vec::new();
    for l in lines {
        let (line, text) = l?;
        out.push(
            serde_json::from_str(&text).map_err(|e| DatasetError::SchemaViolation {
                line,
                reason: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

/// Request slots used by annotation; mock fixtures key on these as the round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationStep {
    StatementAnalysis = 0,
    Statement = 1,
    ProofAnalysis = 2,
    NlProof = 3,
    Weave = 4,
    WeaveRetry = 5,
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Verifier(#[from] VerifierError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("empty reply at annotation step {0:?}")]
    EmptyReply(AnnotationStep),
    /// Both weave attempts failed; `fallback` keeps the unwoven proof with the
    /// NL proof stored separately.
    #[error("woven proof for {} failed re-verification twice", .fallback.theorem_id)]
    AnnotationRejected { fallback: Box<ProveRecord> },
}

pub struct Annotator<'a> {
    pub engine: &'a PromptEngine,
    pub generator: &'a dyn Generator,
    pub verifier: &'a dyn Verifier,
    pub params: SamplingParams,
}

impl Annotator<'_> {
    fn ask(
        &self,
        theorem_id: &str,
        step: AnnotationStep,
        instruction: String,
    ) -> Result<String, AnnotationError> {
        let prompt = RenderedPrompt {
            system: String::new(),
            instruction,
            response_prefix: String::new(),
            nl_placeholder: false,
        };
        let params = SamplingParams {
            n: 1,
            ..self.params.clone()
        };
        let req = crate::llm::GenerationRequest {
            key: RequestKey {
                theorem_id: theorem_id.to_string(),
                round: step as u32,
                first_sample: 0,
            },
            prompt: &prompt,
            params: &params,
        };
        let text = self
            .generator
            .generate(&req)?
            .into_iter()
            .next()
            .map(|c| c.text.trim().to_string())
            .unwrap_or_default();
        if text.is_empty() {
            return Err(AnnotationError::EmptyReply(step));
        }
        Ok(text)
    }

    /// Fills the NL statement (if missing) and weaves an NL proof into the
    /// Lean proof as comments. Complete records come back unchanged without
    /// any model call.
    pub fn annotate(&self, record: &ProveRecord) -> Result<ProveRecord, AnnotationError> {
        if record.is_annotated() {
            return Ok(record.clone());
        }
        let t = &self.engine.templates;
        let mut out = record.clone();
        let id = record.theorem_id.as_str();
        if out.nl_statement.trim().is_empty() {
            let vars = BTreeMap::from([("fl_statement", record.fl_statement.as_str())]);
            let analysis = self.ask(
                id,
                AnnotationStep::StatementAnalysis,
                fill(&t.annotate_statement_analysis, &vars)?,
            )?;
            let vars = BTreeMap::from([
                ("fl_statement", record.fl_statement.as_str()),
                ("analysis", analysis.as_str()),
            ]);
            out.nl_statement = self.ask(
                id,
                AnnotationStep::Statement,
                fill(&t.annotate_statement, &vars)?,
            )?;
        }
        if out.nl_proof.is_some() || has_comments(&out.commented_fl_proof) {
            return Ok(out);
        }
        let proof = record.commented_fl_proof.as_str();
        let vars = BTreeMap::from([
            ("fl_statement", record.fl_statement.as_str()),
            ("proof", proof),
        ]);
        let analysis = self.ask(
            id,
            AnnotationStep::ProofAnalysis,
            fill(&t.annotate_analysis, &vars)?,
        )?;
        let vars = BTreeMap::from([
            ("fl_statement", record.fl_statement.as_str()),
            ("proof", proof),
            ("analysis", analysis.as_str()),
        ]);
        let nl_proof = self.ask(
            id,
            AnnotationStep::NlProof,
            fill(&t.annotate_nl_proof, &vars)?,
        )?;
        let theorem = Theorem::new(id, &out.nl_statement, &record.fl_statement);
        let vars = BTreeMap::from([("proof", proof), ("nl_proof", nl_proof.as_str())]);
        let weave_prompt = fill(&t.annotate_weave, &vars)?;
        for step in [AnnotationStep::Weave, AnnotationStep::WeaveRetry] {
            let reply = self.ask(id, step, weave_prompt.clone())?;
            let Some(woven) = parse_model_output(&reply).chosen_proof else {
                continue;
            };
            if code_skeleton(&woven) != code_skeleton(proof) {
                log::debug!("{id}: weave altered code; rejecting");
                continue;
            }
            if self.verifier.check(&theorem, &woven)?.is_pass() {
                out.commented_fl_proof = woven;
                out.nl_proof = Some(nl_proof);
                return Ok(out);
            }
        }
        out.nl_proof = Some(nl_proof);
        Err(AnnotationError::AnnotationRejected {
            fallback: Box::new(out),
        })
    }
}

/// Whether a diagnostic came from the no-sorry rule.
pub fn is_sorry_diagnostic(d: &Diagnostic) -> bool {
    d.kind == DiagnosticKind::ContainsSorry
}
