use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{
    check_context, estimate_tokens, Completion, FinishReason, GenerationRequest, Generator,
    LlmError, RateLimiter, RetryPolicy, Semaphore, DEFAULT_CONTEXT_TOKENS,
};

/// Where the response prefix goes in the chat transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestStyle {
    /// Trailing assistant message the server continues from.
    #[default]
    AssistantPrefix,
    /// Prefix appended to the user message.
    InlineUser,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendProfile {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token; unset means no auth.
    pub api_key_env: Option<String>,
    pub request_style: RequestStyle,
    /// Whether one request may ask for `n > 1` choices.
    pub supports_n: bool,
    pub context_tokens: u32,
    /// 0 disables client-side rate limiting.
    pub requests_per_minute: u32,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    /// Extra top-level fields merged into every request body.
    pub extra_body: Map<String, Value>,
}

impl Default for BackendProfile {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "prover".into(),
            api_key_env: None,
            request_style: RequestStyle::AssistantPrefix,
            supports_n: true,
            context_tokens: DEFAULT_CONTEXT_TOKENS,
            requests_per_minute: 0,
            max_in_flight: 8,
            timeout_secs: 600,
            retry: RetryPolicy::default(),
            extra_body: Map::new(),
        }
    }
}

/// Blocking client for an OpenAI-style chat-completions endpoint.
pub struct HttpBackend {
    profile: BackendProfile,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    in_flight: Semaphore,
    limiter: RateLimiter,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("profile", &self.profile)
            .finish_non_exhaustive()
    }
}

impl HttpBackend {
    /// Fails when the profile names an API key variable that is not set.
    pub fn new(profile: BackendProfile) -> Result<Self, String> {
        let api_key = match &profile.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                format!("backend.api_key_env: environment variable {var} is not set")
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(profile.timeout_secs))
            .build()
            .map_err(|e| format!("backend: {e}"))?;
        Ok(Self {
            in_flight: Semaphore::new(profile.max_in_flight),
            limiter: RateLimiter::per_minute(profile.requests_per_minute),
            profile,
            api_key,
            client,
        })
    }

    pub fn profile(&self) -> &BackendProfile {
        &self.profile
    }

    /// JSON body for one request asking for `n` choices.
    pub fn request_body(&self, request: &GenerationRequest<'_>, n: u32) -> Value {
        let p = request.prompt;
        let params = request.params;
        let mut messages = vec![json!({"role": "system", "content": p.system})];
        match self.profile.request_style {
            RequestStyle::AssistantPrefix => {
                messages.push(json!({"role": "user", "content": p.instruction}));
                if !p.response_prefix.is_empty() {
                    messages.push(json!({"role": "assistant", "content": p.response_prefix}));
                }
            }
            RequestStyle::InlineUser => {
                let mut user = p.instruction.clone();
                if !p.response_prefix.is_empty() {
                    if !user.ends_with('\n') {
                        user.push('\n');
                    }
                    user.push_str(&p.response_prefix);
                }
                messages.push(json!({"role": "user", "content": user}));
            }
        }
        let mut body = json!({
            "model": self.profile.model,
            "messages": messages,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_new_tokens,
            "n": n,
        });
        let obj = body.as_object_mut().expect("object literal");
        if !params.stop_sequences.is_empty() {
            obj.insert("stop".into(), json!(params.stop_sequences));
        }
        for (k, v) in &self.profile.extra_body {
            obj.insert(k.clone(), v.clone());
        }
        body
    }

    fn send(&self, body: &Value) -> Result<Value, LlmError> {
        self.limiter.wait();
        let _permit = self.in_flight.acquire();
        let mut req = self.client.post(&self.profile.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
        if status.as_u16() == 429 {
            return Err(LlmError::RateLimited(truncate(&text)));
        }
        if status.is_server_error() {
            return Err(LlmError::BackendUnavailable(format!(
                "{status}: {}",
                truncate(&text)
            )));
        }
        if !status.is_success() {
            return Err(LlmError::BadResponse(format!(
                "{status}: {}",
                truncate(&text)
            )));
        }
        serde_json::from_str(&text).map_err(|e| LlmError::BadResponse(e.to_string()))
    }

    fn call(&self, request: &GenerationRequest<'_>, n: u32) -> Result<Vec<Completion>, LlmError> {
        let body = self.request_body(request, n);
        let value = self.profile.retry.run(|| self.send(&body))?;
        parse_response(&value, n)
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(300).collect()
}

/// Extracts `n` completions from a chat-completions response, ordered by
/// choice index.
pub(crate) fn parse_response(value: &Value, n: u32) -> Result<Vec<Completion>, LlmError> {
    let choices = value
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| LlmError::BadResponse("missing choices array".into()))?;
    if choices.len() != n as usize {
        return Err(LlmError::BadResponse(format!(
            "expected {n} choices, got {}",
            choices.len()
        )));
    }
    let mut indexed = Vec::with_capacity(choices.len());
    for (pos, c) in choices.iter().enumerate() {
        let index = c.get("index").and_then(Value::as_u64).unwrap_or(pos as u64);
        let text = c
            .pointer("/message/content")
            .or_else(|| c.get("text"))
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::BadResponse(format!("choice {pos} has no text")))?;
        let finish_reason = match c.get("finish_reason").and_then(Value::as_str) {
            Some("length") => FinishReason::Length,
            Some("stop") | Some("eos") | None => FinishReason::Stop,
            Some(_) => FinishReason::Error,
        };
        indexed.push((index, text.to_string(), finish_reason));
    }
    indexed.sort_by_key(|(i, _, _)| *i);
    let usage = value
        .pointer("/usage/completion_tokens")
        .and_then(Value::as_u64);
    Ok(indexed
        .into_iter()
        .map(|(_, text, finish_reason)| Completion {
            // usage is per response; only attributable when there is one choice
            tokens_generated: match usage {
                Some(u) if n == 1 => u,
                _ => estimate_tokens(&text),
            },
            text,
            finish_reason,
        })
        .collect())
}

impl Generator for HttpBackend {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<Completion>, LlmError> {
        check_context(request.prompt, request.params, self.profile.context_tokens)?;
        let n = request.params.n;
        if self.profile.supports_n || n == 1 {
            return self.call(request, n);
        }
        let mut out = Vec::with_capacity(n as usize);
        for _ in 0..n {
            out.extend(self.call(request, 1)?);
        }
        Ok(out)
    }

    fn supports_batching(&self) -> bool {
        self.profile.supports_n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{RequestKey, SamplingParams};
    use crate::prompt::RenderedPrompt;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn prompt() -> RenderedPrompt {
        RenderedPrompt {
            system: "SYS".into(),
            instruction: "INS\n".into(),
            response_prefix: "<Thought>\n".into(),
            nl_placeholder: false,
        }
    }

    fn request<'a>(p: &'a RenderedPrompt, params: &'a SamplingParams) -> GenerationRequest<'a> {
        GenerationRequest {
            key: RequestKey {
                theorem_id: "t".into(),
                round: 0,
                first_sample: 0,
            },
            prompt: p,
            params,
        }
    }

    /// Serves `responses` in order, one per connection, returning the bodies it saw.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<Value>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!(
            "http://{}/v1/chat/completions",
            listener.local_addr().unwrap()
        );
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                seen.push(serde_json::from_slice(&buf).unwrap());
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            seen
        });
        (url, handle)
    }

    fn backend(url: String, style: RequestStyle, supports_n: bool) -> HttpBackend {
        HttpBackend::new(BackendProfile {
            endpoint: url,
            request_style: style,
            supports_n,
            retry: RetryPolicy {
                max_retries: 2,
                initial_backoff_ms: 1,
                max_backoff_ms: 1,
            },
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn assistant_prefix_request_and_usage() {
        let (url, h) = serve(vec![(
            200,
            r#"{"choices":[{"index":0,"message":{"role":"assistant","content":"done"},"finish_reason":"stop"}],"usage":{"completion_tokens":17}}"#.into(),
        )]);
        let b = backend(url, RequestStyle::AssistantPrefix, true);
        let p = prompt();
        let params = SamplingParams::default();
        let out = b.generate(&request(&p, &params)).unwrap();
        assert_eq!(out[0].text, "done");
        assert_eq!(out[0].tokens_generated, 17);
        let seen = h.join().unwrap();
        let msgs = seen[0]["messages"].as_array().unwrap();
        assert_eq!(msgs.len(), 3);
        assert_eq!(msgs[2]["role"], "assistant");
        assert_eq!(msgs[2]["content"], "<Thought>\n");
        assert_eq!(seen[0]["max_tokens"], 2048);
    }

    #[test]
    fn inline_style_and_sequential_fallback() {
        let one = |t: &str| {
            (
                200,
                format!(
                    r#"{{"choices":[{{"message":{{"content":"{t}"}},"finish_reason":"length"}}]}}"#
                ),
            )
        };
        let (url, h) = serve(vec![one("a"), one("bb")]);
        let b = backend(url, RequestStyle::InlineUser, false);
        let p = prompt();
        let params = SamplingParams {
            n: 2,
            ..Default::default()
        };
        let out = b.generate(&request(&p, &params)).unwrap();
        assert_eq!(
            out.iter().map(|c| c.text.as_str()).collect::<Vec<_>>(),
            ["a", "bb"]
        );
        assert_eq!(out[0].finish_reason, FinishReason::Length);
        let seen = h.join().unwrap();
        assert_eq!(seen.len(), 2);
        assert_eq!(seen[0]["n"], 1);
        let msgs = seen[0]["messages"].as_array().unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[1]["content"], "INS\n<Thought>\n");
    }

    #[test]
    fn rate_limit_is_retried() {
        let (url, h) = serve(vec![
            (429, "{}".into()),
            (200, r#"{"choices":[{"message":{"content":"ok"}}]}"#.into()),
        ]);
        let b = backend(url, RequestStyle::AssistantPrefix, true);
        let p = prompt();
        let params = SamplingParams::default();
        assert_eq!(b.generate(&request(&p, &params)).unwrap()[0].text, "ok");
        assert_eq!(h.join().unwrap().len(), 2);
    }

    #[test]
    fn overflow_checked_before_network() {
        // port 9 on localhost is never contacted because the check fails first
        let b = backend(
            "http://127.0.0.1:9/".into(),
            RequestStyle::AssistantPrefix,
            true,
        );
        let mut p = prompt();
        p.system = "x".repeat(20_000);
        let params = SamplingParams::default();
        assert!(matches!(
            b.generate(&request(&p, &params)),
            Err(LlmError::ContextOverflow { .. })
        ));
    }

    #[test]
    fn choices_reordered_by_index() {
        let v: Value = serde_json::from_str(
            r#"{"choices":[{"index":1,"message":{"content":"second"}},{"index":0,"message":{"content":"first"}}],"usage":{"completion_tokens":99}}"#,
        )
        .unwrap();
        let out = parse_response(&v, 2).unwrap();
        assert_eq!(out[0].text, "first");
        assert_eq!(out[0].tokens_generated, estimate_tokens("first"));
        assert!(parse_response(&v, 3).is_err());
    }

    #[test]
    fn missing_key_variable_is_config_error() {
        let r = HttpBackend::new(BackendProfile {
            api_key_env: Some("LEAN_COLLAB_SURELY_UNSET_VAR".into()),
            ..Default::default()
        });
        assert!(r.unwrap_err().contains("LEAN_COLLAB_SURELY_UNSET_VAR"));
    }
}
