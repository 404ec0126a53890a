//! Prompt and training-example rendering.
//!
//! Templates are plain text with `{{name}}` placeholders. Substitution scans
//! the template once, so placeholder-like text inside substituted values
//! (Lean uses braces freely) is never re-expanded.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{Attempt, Theorem, VerdictStatus};
use crate::parse::render_error_block;

/// Bumped whenever a shipped template changes; folded into run fingerprints.
pub const TEMPLATE_VERSION: &str = "lean-collab-templates/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemPromptMode {
    WithLongCot,
    WithoutLongCot,
    Corrector,
}

/// Which system text corrector prompts carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectorSystem {
    /// The dedicated corrector objectives text.
    #[default]
    Dedicated,
    /// The same Long CoT system text the prover uses.
    SameAsProver,
}

/// What to do with a theorem whose NL statement is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingNlPolicy {
    /// Substitute a prose placeholder built from the formal statement and flag the prompt.
    #[default]
    Placeholder,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system: String,
    pub instruction: String,
    /// Text the model is primed to continue.
    pub response_prefix: String,
    /// Set when the NL statement was synthesized from the formal statement.
    #[serde(default)]
    pub nl_placeholder: bool,
}

impl RenderedPrompt {
    /// Single-string form: system, instruction, then the response prefix.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(
            self.system.len() + self.instruction.len() + self.response_prefix.len() + 40,
        );
        s.push_str(&self.system);
        s.push_str("\n### Instruction:\n");
        s.push_str(&self.instruction);
        if !self.instruction.ends_with('\n') {
            s.push('\n');
        }
        s.push_str("### Response:\n");
        s.push_str(&self.response_prefix);
        s
    }

    /// Stable short hash of the full prompt text.
    pub fn hash(&self) -> String {
        prompt_hash(&self.to_text())
    }
}

pub fn prompt_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(&digest[..8])
}

/// Input/output pair for supervised fine-tuning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("theorem {0} has no natural-language statement")]
    MissingNlStatement(String),
    #[error("failed attempt {0} carries no diagnostics")]
    NoDiagnostics(String),
    #[error("failed attempt {0} has no extracted proof")]
    MissingProof(String),
    #[error("attempt {0} is not a failure (status {1})")]
    NotAFailure(String, String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("template {name}: {reason}")]
    Template { name: String, reason: String },
}

/// Chat sentinels wrapped around training examples; model-family specific.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentinels {
    #[serde(default)]
    pub begin: Option<String>,
    #[serde(default)]
    pub end: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Templates {
    pub system_with_cot: String,
    pub system_without_cot: String,
    pub system_corrector: String,
    pub system_correction_training: String,
    pub instruction: String,
    pub prover_prefix: String,
    pub corrector_draft: String,
    pub corrector_rethink: String,
    pub placeholder_thought: String,
    pub correction_bridge: String,
    pub annotate_analysis: String,
    pub annotate_nl_proof: String,
    pub annotate_weave: String,
    pub annotate_statement_analysis: String,
    pub annotate_statement: String,
}

macro_rules! shipped {
    ($name:literal) => {
        include_str!(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/templates/",
            $name,
            ".txt"
        ))
    };
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            system_with_cot: shipped!("system_with_cot").into(),
            system_without_cot: shipped!("system_without_cot").into(),
            system_corrector: shipped!("system_corrector").into(),
            system_correction_training: shipped!("system_correction_training").into(),
            instruction: shipped!("instruction").into(),
            prover_prefix: shipped!("prover_prefix").into(),
            corrector_draft: shipped!("corrector_draft").into(),
            corrector_rethink: shipped!("corrector_rethink").into(),
            placeholder_thought: shipped!("placeholder_thought").into(),
            correction_bridge: shipped!("correction_bridge").into(),
            annotate_analysis: shipped!("annotate_analysis").into(),
            annotate_nl_proof: shipped!("annotate_nl_proof").into(),
            annotate_weave: shipped!("annotate_weave").into(),
            annotate_statement_analysis: shipped!("annotate_statement_analysis").into(),
            annotate_statement: shipped!("annotate_statement").into(),
        }
    }
}

impl Templates {
    /// Shipped templates with any `<name>.txt` found in `dir` replacing the default.
    pub fn with_overrides(dir: &Path) -> std::io::Result<Self> {
        let mut t = Self::default();
        let slots: [(&str, &mut String); 15] = [
            ("system_with_cot", &mut t.system_with_cot),
            ("system_without_cot", &mut t.system_without_cot),
            ("system_corrector", &mut t.system_corrector),
            (
                "system_correction_training",
                &mut t.system_correction_training,
            ),
            ("instruction", &mut t.instruction),
            ("prover_prefix", &mut t.prover_prefix),
            ("corrector_draft", &mut t.corrector_draft),
            ("corrector_rethink", &mut t.corrector_rethink),
            ("placeholder_thought", &mut t.placeholder_thought),
            ("correction_bridge", &mut t.correction_bridge),
            ("annotate_analysis", &mut t.annotate_analysis),
            ("annotate_nl_proof", &mut t.annotate_nl_proof),
            ("annotate_weave", &mut t.annotate_weave),
            (
                "annotate_statement_analysis",
                &mut t.annotate_statement_analysis,
            ),
            ("annotate_statement", &mut t.annotate_statement),
        ];
        for (name, slot) in slots {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = fs::read_to_string(path)?;
            }
        }
        Ok(t)
    }

    /// Content hash of every template, for fingerprinting runs that use overrides.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("templates serialize");
        prompt_hash(&json)
    }

    pub fn system_text(&self, mode: SystemPromptMode) -> &str {
        match mode {
            SystemPromptMode::WithLongCot => &self.system_with_cot,
            SystemPromptMode::WithoutLongCot => &self.system_without_cot,
            SystemPromptMode::Corrector => &self.system_corrector,
        }
    }
}

/// Single-pass `{{name}}` substitution. Unknown placeholders are an error.
pub fn fill(template: &str, vars: &BTreeMap<&str, &str>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            out.push_str(&rest[start..]);
            return Ok(out);
        };
        let name = after[..end].trim();
        match vars.get(name) {
            Some(v) => out.push_str(v),
            None => {
                return Err(PromptError::Template {
                    name: name.to_string(),
                    reason: "no value for placeholder".into(),
                })
            }
        }
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn strip_final_newline(s: &str) -> &str {
    s.strip_suffix('\n').unwrap_or(s)
}

/// Renders prompts and training examples from a template set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptEngine {
    pub templates: Templates,
    #[serde(default)]
    pub corrector_system: CorrectorSystem,
    #[serde(default)]
    pub missing_nl: MissingNlPolicy,
    #[serde(default)]
    pub sentinels: Sentinels,
}

impl PromptEngine {
    pub fn new(templates: Templates) -> Self {
        Self {
            templates,
            ..Default::default()
        }
    }

    fn instruction(&self, theorem: &Theorem) -> Result<(String, bool), PromptError> {
        let (nl, placeholder) = if theorem.nl_statement.trim().is_empty() {
            match self.missing_nl {
                MissingNlPolicy::Reject => {
                    return Err(PromptError::MissingNlStatement(theorem.id.clone()))
                }
                MissingNlPolicy::Placeholder => (
                    format!(
                        "(No natural language statement is available.) Prove the following Lean4 statement: {}",
                        theorem.fl_statement.split_whitespace().collect::<Vec<_>>().join(" ")
                    ),
                    true,
                ),
            }
        } else {
            (theorem.nl_statement.clone(), false)
        };
        let vars = BTreeMap::from([
            ("theorem_id", theorem.id.as_str()),
            ("nl_statement", nl.as_str()),
            ("fl_statement", theorem.fl_statement.as_str()),
        ]);
        Ok((fill(&self.templates.instruction, &vars)?, placeholder))
    }

    /// Prover prompt: Long CoT system text, the statement pair, and the
    /// three-step planning header.
    pub fn render_prover_prompt(&self, theorem: &Theorem) -> Result<RenderedPrompt, PromptError> {
        let (instruction, nl_placeholder) = self.instruction(theorem)?;
        Ok(RenderedPrompt {
            system: self.templates.system_with_cot.clone(),
            instruction,
            response_prefix: self.templates.prover_prefix.clone(),
            nl_placeholder,
        })
    }

    /// Corrector prompt embedding the failed draft and its error messages.
    /// Only `failed` is rendered; `history` is accepted so callers can pass
    /// the whole chain, but earlier rounds are not embedded.
    pub fn render_corrector_prompt(
        &self,
        theorem: &Theorem,
        failed: &Attempt,
        _history: &[Attempt],
    ) -> Result<RenderedPrompt, PromptError> {
        let key = failed.key().to_string();
        let verdict = &failed.verdict;
        if !matches!(verdict.status, VerdictStatus::Fail | VerdictStatus::Timeout) {
            return Err(PromptError::NotAFailure(key, verdict.status.to_string()));
        }
        let proof = failed
            .extracted_proof
            .as_deref()
            .ok_or_else(|| PromptError::MissingProof(key.clone()))?;
        let blocks = render_error_block(&verdict.diagnostics)
            .map_err(|_| PromptError::NoDiagnostics(key.clone()))?;
        let (instruction, nl_placeholder) = self.instruction(theorem)?;
        let draft = full_declaration(&theorem.fl_statement, proof);
        let vars = BTreeMap::from([
            ("theorem_id", theorem.id.as_str()),
            ("draft", draft.as_str()),
            ("error_blocks", strip_final_newline(&blocks)),
        ]);
        let mut prefix = fill(&self.templates.corrector_draft, &vars)?;
        prefix.push_str(&self.templates.corrector_rethink);
        let system = match self.corrector_system {
            CorrectorSystem::Dedicated => self.templates.system_corrector.clone(),
            CorrectorSystem::SameAsProver => self.templates.system_with_cot.clone(),
        };
        Ok(RenderedPrompt {
            system,
            instruction,
            response_prefix: prefix,
            nl_placeholder,
        })
    }

    fn training_input(&self, system: &str, instruction: &str, prefix: &str) -> String {
        let p = RenderedPrompt {
            system: system.to_string(),
            instruction: instruction.to_string(),
            response_prefix: prefix.to_string(),
            nl_placeholder: false,
        };
        let mut s = self.sentinels.begin.clone().unwrap_or_default();
        s.push_str(&p.to_text());
        s
    }

    fn output_section(&self, proof: &str) -> String {
        let mut s = format!(
            "<Output>\n```lean4\n{}\n```\n</Output>",
            strip_final_newline(proof)
        );
        if let Some(end) = &self.sentinels.end {
            s.push_str(end);
        }
        s
    }

    /// Prove-data example with the Long CoT switched off: the thought holds
    /// only the placeholder sentence.
    pub fn render_sft_example(
        &self,
        record: &crate::dataset::ProveRecord,
    ) -> Result<TrainingPair, PromptError> {
        record.validate().map_err(PromptError::InvalidRecord)?;
        let theorem = Theorem::new(
            &record.theorem_id,
            &record.nl_statement,
            &record.fl_statement,
        );
        let (instruction, _) = self.instruction(&theorem)?;
        let input = self.training_input(&self.templates.system_without_cot, &instruction, "");
        let output = format!(
            "<Thought>\n{}\n</Thought>\n{}",
            strip_final_newline(&self.templates.placeholder_thought),
            self.output_section(&record.commented_fl_proof)
        );
        Ok(TrainingPair { input, output })
    }

    /// Correction-data example: the draft and its errors are given inside the
    /// thought; the output skips error analysis and gives the correct proof.
    pub fn render_correction_example(
        &self,
        record: &crate::dataset::CorrectionRecord,
    ) -> Result<TrainingPair, PromptError> {
        record.validate().map_err(PromptError::InvalidRecord)?;
        let theorem = Theorem::new(
            &record.theorem_id,
            &record.nl_statement,
            &record.fl_statement,
        );
        let (instruction, _) = self.instruction(&theorem)?;
        let blocks = render_error_block(&record.error_messages)
            .map_err(|_| PromptError::NoDiagnostics(record.theorem_id.clone()))?;
        let vars = BTreeMap::from([
            ("theorem_id", record.theorem_id.as_str()),
            ("draft", strip_final_newline(&record.incorrect_fl_proof)),
            ("error_blocks", strip_final_newline(&blocks)),
        ]);
        let given = fill(&self.templates.corrector_draft, &vars)?;
        let input = self.training_input(
            &self.templates.system_correction_training,
            &instruction,
            &given,
        );
        let output = format!(
            "{}\n</Thought>\n{}",
            strip_final_newline(&self.templates.correction_bridge),
            self.output_section(&record.correct_fl_proof)
        );
        Ok(TrainingPair { input, output })
    }
}

/// A proof as a full declaration: used as-is when it already declares the
/// theorem, otherwise spliced after the statement.
pub fn full_declaration(fl_statement: &str, proof: &str) -> String {
    let name = crate::model::declaration_name(fl_statement);
    let declares = name.is_some_and(|n| crate::model::declaration_name(proof) == Some(n));
    if declares {
        return proof.to_string();
    }
    splice(fl_statement, proof)
}

/// Appends a tactic fragment after a statement, inserting `by` when the
/// statement stops at `:=` and indenting a flush-left fragment.
pub(crate) fn splice(fl_statement: &str, fragment: &str) -> String {
    let stmt = fl_statement.trim_end();
    let body = fragment.trim_start_matches(['\n', '\r']);
    let first = body.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let body_starts_by = first.trim_start().starts_with("by");
    let mut out = String::from(fl_statement.trim_end_matches(['\n', '\r']));
    if stmt.ends_with(":=") && !body_starts_by {
        out.push_str(" by");
    }
    out.push('\n');
    if !first.is_empty() && !first.starts_with([' ', '\t']) {
        let indented: Vec<String> = body
            .lines()
            .map(|l| {
                if l.is_empty() {
                    String::new()
                } else {
                    format!("  {l}")
                }
            })
            .collect();
        out.push_str(&indented.join("\n"));
    } else {
        out.push_str(body);
    }
    out
}
