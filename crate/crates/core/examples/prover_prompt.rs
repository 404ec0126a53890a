//! Render the prover prompt for one theorem, with and without an informal
//! statement.
//!
//! cargo run --example prover_prompt

use lean_collab::model::Theorem;
use lean_collab::prompt::PromptEngine;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let engine = PromptEngine::default();
    let theorem = Theorem::new(
        "mathd_algebra_10",
        "Evaluate $|{-4^2+6^2}|$. Show that it is 20.",
        "theorem mathd_algebra_10 : abs ((-4 : ℤ) ^ 2 + 6 ^ 2) = 20 := by",
    );
    let prompt = engine.render_prover_prompt(&theorem)?;
    println!("{}", prompt.to_text());
    println!("prompt hash: {}", prompt.hash());

    // statement without an informal version: the engine's missing-NL policy applies
    let bare = Theorem::new(
        "bare",
        "",
        "theorem bare (n : ℕ) (h : n % 2 = 1) : n ^ 2 % 2 = 1 := by",
    );
    let prompt = engine.render_prover_prompt(&bare)?;
    println!(
        "\n--- no informal statement (placeholder: {}) ---",
        prompt.nl_placeholder
    );
    println!("{}", prompt.instruction);
    Ok(())
}
