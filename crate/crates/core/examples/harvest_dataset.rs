//! Turn a finished run into fine-tuning data: prove records from passing
//! proofs, correction records pairing failures with the eventual pass,
//! curriculum ordered and rendered as prompt/completion pairs.
//!
//! cargo run --example harvest_dataset

use lean_collab::dataset::{curriculum_sort, harvest, write_records, write_training, Record};
use lean_collab::llm::ScriptedMock;
use lean_collab::model::{Budget, Diagnostic, Theorem, Verdict};
use lean_collab::orchestrator::{Pipeline, PipelineConfig};
use lean_collab::prompt::PromptEngine;
use lean_collab::verifier::{MockTable, MockVerifier};

fn answer(proof: &str) -> String {
    format!("<Thought>\n...\n</Thought>\n<Output>\n```lean4\n{proof}\n```\n</Output>\n")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t = Theorem::new(
        "amgm2",
        "Show that for nonnegative reals $a, b$, $ab \\le (a+b)^2/4$.",
        "theorem amgm2 (a b : ℝ) : a * b ≤ (a + b) ^ 2 / 4 := by",
    );
    let good = "  nlinarith [sq_nonneg (a - b)]";
    let mut model = ScriptedMock::new();
    model.push(&t.id, 0, 0, answer("  nlinarith"));
    model.push(&t.id, 0, 1, answer("  linarith"));
    model.push(&t.id, 1, 0, answer(good));
    let mut table = MockTable::default();
    let goal = "a b : ℝ\na✝ : a * b > (a + b) ^ 2 / 4\n⊢ False failed";
    table.insert(
        &t.id,
        "  nlinarith",
        Verdict::fail(vec![Diagnostic::error(
            Some(2),
            format!("linarith failed to find a contradiction\n{goal}"),
        )]),
    );
    table.insert(
        &t.id,
        "  linarith",
        Verdict::fail(vec![
            Diagnostic::error(
                Some(2),
                format!("linarith failed to find a contradiction\n{goal}"),
            ),
            Diagnostic::error(
                Some(1),
                "unsolved goals\na b : ℝ\n⊢ a * b ≤ (a + b) ^ 2 / 4",
            ),
        ]),
    );
    table.insert(&t.id, good, Verdict::pass());

    let engine = PromptEngine::default();
    let verifier = MockVerifier::new(table);
    let config = PipelineConfig {
        budget: Budget::new(2, 1, 1),
        ..Default::default()
    };
    let report = Pipeline::new(config, &engine, &model, &verifier).run(&[t])?;

    let (prove, correct) = harvest(&report, 3);
    let mut records: Vec<Record> = prove
        .into_iter()
        .map(Record::Prove)
        .chain(correct.into_iter().map(Record::Correction))
        .collect();
    curriculum_sort(&mut records);

    let mut stdout = std::io::stdout().lock();
    println!("== records ==");
    write_records(&mut stdout, &records)?;
    println!("== training pairs ==");
    write_training(&mut stdout, &engine, &records)?;
    Ok(())
}
