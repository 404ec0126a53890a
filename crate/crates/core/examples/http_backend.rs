//! Talk to an OpenAI-style chat-completions server.
//!
//! cargo run --example http_backend                  # print the request body only
//! cargo run --example http_backend -- URL [MODEL]   # also send it
//!
//! Set `PROVER_API_KEY` if the server wants a bearer token.

use lean_collab::llm::{
    BackendProfile, GenerationRequest, Generator, HttpBackend, RequestKey, RetryPolicy,
    SamplingParams,
};
use lean_collab::model::Theorem;
use lean_collab::prompt::PromptEngine;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let endpoint = args.next();
    let mut profile = BackendProfile {
        model: args.next().unwrap_or_else(|| "prover".into()),
        api_key_env: std::env::var_os("PROVER_API_KEY").map(|_| "PROVER_API_KEY".into()),
        requests_per_minute: 30,
        retry: RetryPolicy {
            max_retries: 2,
            ..Default::default()
        },
        ..Default::default()
    };
    if let Some(url) = &endpoint {
        profile.endpoint = url.clone();
    }
    let backend = HttpBackend::new(profile)?;

    let engine = PromptEngine::default();
    let theorem = Theorem::new(
        "mathd_algebra_48",
        "Show that $(9-4i)-(-3-4i) = 12$.",
        "theorem mathd_algebra_48 (q e : ℂ) (h₀ : q = 9 - 4 * Complex.I) (h₁ : e = -3 - 4 * Complex.I) : q - e = 12 := by",
    );
    let prompt = engine.render_prover_prompt(&theorem)?;
    let params = SamplingParams {
        max_new_tokens: 1024,
        n: 2,
        ..Default::default()
    };
    let request = GenerationRequest {
        key: RequestKey {
            theorem_id: theorem.id.clone(),
            round: 0,
            first_sample: 0,
        },
        prompt: &prompt,
        params: &params,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&backend.request_body(&request, params.n))?
    );

    if endpoint.is_some() {
        match backend.generate(&request) {
            Ok(completions) => {
                for (i, c) in completions.iter().enumerate() {
                    println!(
                        "--- sample {i}: {} tokens, {:?}\n{}",
                        c.tokens_generated, c.finish_reason, c.text
                    );
                }
            }
            Err(e) => {
                eprintln!("backend failure: {e}");
                std::process::exit(3);
            }
        }
    }
    Ok(())
}
