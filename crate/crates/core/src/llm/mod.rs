//! Generation backends behind one interface.
//!
//! [`ScriptedMock`] replays fixture completions keyed by attempt position;
//! [`HttpBackend`] speaks the common chat-completion JSON contract.

mod http;
mod mock;

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use http::{BackendProfile, HttpBackend, RequestStyle};
pub use mock::{FixtureCompletion, ScriptedMock};

use crate::prompt::RenderedPrompt;

/// Context length assumed when a backend does not say otherwise.
pub const DEFAULT_CONTEXT_TOKENS: u32 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
    pub n: u32,
    pub stop_sequences: Vec<String>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_p: 0.95,
            max_new_tokens: 2048,
            n: 1,
            stop_sequences: Vec::new(),
        }
    }
}

impl SamplingParams {
    pub fn validate(&self, context_tokens: u32) -> Result<(), String> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err("sampling.temperature must be >= 0".into());
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err("sampling.top_p must be in (0, 1]".into());
        }
        if self.max_new_tokens == 0 {
            return Err("sampling.max_new_tokens must be >= 1".into());
        }
        if self.max_new_tokens > context_tokens {
            return Err(format!(
                "sampling.max_new_tokens ({}) exceeds the context budget ({context_tokens})",
                self.max_new_tokens
            ));
        }
        if self.n == 0 {
            return Err("sampling.n must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub tokens_generated: u64,
    pub finish_reason: FinishReason,
}

/// Identifies the first sample a request produces; sample `i` of the
/// response has index `first_sample + i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RequestKey {
    pub theorem_id: String,
    pub round: u32,
    pub first_sample: u32,
}

#[derive(Debug, Clone)]
pub struct GenerationRequest<'a> {
    pub key: RequestKey,
    pub prompt: &'a RenderedPrompt,
    pub params: &'a SamplingParams,
}

impl GenerationRequest<'_> {
    pub fn prompt_hash(&self) -> String {
        self.prompt.hash()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("prompt of ~{prompt_tokens} tokens plus {max_new_tokens} new tokens exceeds the {context} token context")]
    ContextOverflow {
        prompt_tokens: u64,
        max_new_tokens: u32,
        context: u32,
    },
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("no fixture completion for {theorem_id} round {round} sample {sample_index}")]
    MissingFixture {
        theorem_id: String,
        round: u32,
        sample_index: u32,
    },
    #[error("fixture for {theorem_id} round {round} sample {sample_index} expects prompt {expected}, got {actual}")]
    PromptDrift {
        theorem_id: String,
        round: u32,
        sample_index: u32,
        expected: String,
        actual: String,
    },
    #[error("malformed backend response: {0}")]
    BadResponse(String),
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            LlmError::BackendUnavailable(_) | LlmError::RateLimited(_)
        )
    }
}

/// A source of completions. Implementations must return exactly
/// `params.n` completions in sample order.
pub trait Generator: Send + Sync {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<Completion>, LlmError>;

    /// Whether one request may carry `n > 1`.
    fn supports_batching(&self) -> bool {
        true
    }
}

impl<G: Generator + ?Sized> Generator for &G {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<Completion>, LlmError> {
        (**self).generate(request)
    }
    fn supports_batching(&self) -> bool {
        (**self).supports_batching()
    }
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<Completion>, LlmError> {
        (**self).generate(request)
    }
    fn supports_batching(&self) -> bool {
        (**self).supports_batching()
    }
}

/// Generator backed by a closure over (key, sample index, prompt); handy for
/// rule-based mocks.
pub struct FnGenerator<F>(pub F);

impl<F> Generator for FnGenerator<F>
where
    F: Fn(&RequestKey, u32, &RenderedPrompt) -> Result<Completion, LlmError> + Send + Sync,
{
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<Completion>, LlmError> {
        (0..request.params.n)
            .map(|i| (self.0)(&request.key, request.key.first_sample + i, request.prompt))
            .collect()
    }
}

/// UTF-8 bytes per token assumed by [`estimate_tokens`]. Lean source and
/// LaTeX tokenize densely; 4 undercounted by about a fifth on recorded
/// transcripts.
pub const BYTES_PER_TOKEN: u64 = 3;

/// Token count estimate used when a backend omits usage: UTF-8 bytes /
/// [`BYTES_PER_TOKEN`], rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(BYTES_PER_TOKEN)
}

/// Fails fast when the prompt cannot fit next to the requested completion.
pub fn check_context(
    prompt: &RenderedPrompt,
    params: &SamplingParams,
    context: u32,
) -> Result<(), LlmError> {
    let prompt_tokens = estimate_tokens(&prompt.to_text());
    if prompt_tokens + u64::from(params.max_new_tokens) > u64::from(context) {
        return Err(LlmError::ContextOverflow {
            prompt_tokens,
            max_new_tokens: params.max_new_tokens,
            context,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 5,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }

    /// Runs `op`, retrying retryable errors with exponential backoff.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, LlmError>) -> Result<T, LlmError> {
        let mut attempt = 0;
        loop {
            match op() {
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    let wait = self.backoff(attempt);
                    log::warn!("{e}; retrying in {wait:?}");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().unwrap();
        while *p == 0 {
            p = self.cv.wait(p).unwrap();
        }
        *p -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Spaces request starts at least `interval` apart.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        let interval = if requests == 0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(60.0 / f64::from(requests))
        };
        Self {
            interval,
            next: Mutex::new(None),
        }
    }

    pub fn wait(&self) {
        if self.interval.is_zero() {
            return;
        }
        let sleep_for = {
            let mut next = self.next.lock().unwrap();
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot.saturating_duration_since(now)
        };
        if !sleep_for.is_zero() {
            std::thread::sleep(sleep_for);
        }
    }
}
