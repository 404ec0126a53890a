use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{estimate_tokens, Completion, FinishReason, GenerationRequest, Generator, LlmError};

/// One line of a mock fixture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureCompletion {
    pub theorem_id: String,
    pub round: u32,
    pub sample_index: u32,
    /// When present, the request's prompt hash must match.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_generated: Option<u64>,
}

/// Lookup-table backend: (theorem, round, sample) → fixed completion.
#[derive(Debug, Clone, Default)]
pub struct ScriptedMock {
    table: HashMap<(String, u32, u32), FixtureCompletion>,
    /// Returned for keys absent from the table; `None` makes them an error.
    pub default_text: Option<String>,
}

impl ScriptedMock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_default(mut self, text: impl Into<String>) -> Self {
        self.default_text = Some(text.into());
        self
    }

    pub fn insert(&mut self, fixture: FixtureCompletion) {
        let key = (
            fixture.theorem_id.clone(),
            fixture.round,
            fixture.sample_index,
        );
        self.table.insert(key, fixture);
    }

    pub fn push(
        &mut self,
        theorem_id: &str,
        round: u32,
        sample_index: u32,
        text: impl Into<String>,
    ) {
        self.insert(FixtureCompletion {
            theorem_id: theorem_id.to_string(),
            round,
            sample_index,
            prompt_hash: None,
            text: text.into(),
            tokens_generated: None,
        });
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Loads newline-delimited fixtures; blank lines are skipped.
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut mock = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fixture: FixtureCompletion = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}:{}: {e}", path.display(), i + 1),
                )
            })?;
            mock.insert(fixture);
        }
        Ok(mock)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut rows: Vec<_> = self.table.values().collect();
        rows.sort_by(|a, b| {
            (&a.theorem_id, a.round, a.sample_index).cmp(&(&b.theorem_id, b.round, b.sample_index))
        });
        let mut f = File::create(path)?;
        for row in rows {
            writeln!(f, "{}", serde_json::to_string(row)?)?;
        }
        Ok(())
    }

    fn lookup(&self, req: &GenerationRequest<'_>, sample: u32) -> Result<Completion, LlmError> {
        let key = (req.key.theorem_id.clone(), req.key.round, sample);
        match self.table.get(&key) {
            Some(fx) => {
                if let Some(expected) = &fx.prompt_hash {
                    let actual = req.prompt_hash();
                    if expected != &actual {
                        return Err(LlmError::PromptDrift {
                            theorem_id: key.0,
                            round: key.1,
                            sample_index: key.2,
                            expected: expected.clone(),
                            actual,
                        });
                    }
                }
                Ok(Completion {
                    tokens_generated: fx
                        .tokens_generated
                        .unwrap_or_else(|| estimate_tokens(&fx.text)),
                    text: fx.text.clone(),
                    finish_reason: FinishReason::Stop,
                })
            }
            None => match &self.default_text {
                Some(text) => Ok(Completion {
                    tokens_generated: estimate_tokens(text),
                    text: text.clone(),
                    finish_reason: FinishReason::Stop,
                }),
                None => Err(LlmError::MissingFixture {
                    theorem_id: key.0,
                    round: key.1,
                    sample_index: key.2,
                }),
            },
        }
    }
}

impl Generator for ScriptedMock {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<Completion>, LlmError> {
        (0..request.params.n)
            .map(|i| self.lookup(request, request.key.first_sample + i))
            .collect()
    }
}
