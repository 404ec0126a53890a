//! Build a failed attempt by hand and render the corrector prompt that
//! embeds the draft and its error block.
//!
//! cargo run --example corrector_prompt

use lean_collab::model::{Attempt, Diagnostic, Theorem, Verdict};
use lean_collab::prompt::PromptEngine;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let theorem = Theorem::new(
        "amc12_sq",
        "Show that for real $a, b$, $2ab \\le a^2 + b^2$.",
        "theorem amc12_sq (a b : ℝ) : 2 * a * b ≤ a ^ 2 + b ^ 2 := by",
    );
    let draft = "  nlinarith [sq_nonneg (a + b)]";
    let failed = Attempt {
        theorem_id: theorem.id.clone(),
        round: 0,
        sample_index: 3,
        prompt_hash: String::new(),
        raw_output: String::new(),
        extracted_proof: Some(draft.into()),
        verdict: Verdict::fail(vec![Diagnostic::error(
            Some(2),
            "linarith failed to find a contradiction\na b : ℝ\na✝ : 2 * a * b > a ^ 2 + b ^ 2\n⊢ False failed",
        )]),
        tokens_generated: 412,
        parent: None,
        fallback: false,
    };
    let engine = PromptEngine::default();
    let prompt = engine.render_corrector_prompt(&theorem, &failed, &[])?;
    println!("{}", prompt.to_text());
    Ok(())
}
