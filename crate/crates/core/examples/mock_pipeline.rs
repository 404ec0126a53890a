//! Full prover/corrector loop against a scripted model and a table-driven
//! verifier. Writes a report directory and prints the summary.
//!
//! cargo run --example mock_pipeline [OUT_DIR]

use lean_collab::llm::ScriptedMock;
use lean_collab::metrics::{render_summary, MetricsSummary};
use lean_collab::model::{Budget, Theorem, Verdict};
use lean_collab::orchestrator::{write_report_dir, Pipeline, PipelineConfig};
use lean_collab::prompt::PromptEngine;
use lean_collab::verifier::{MockTable, MockVerifier};

fn answer(proof: &str) -> String {
    format!("<Thought>\nTry it.\n</Thought>\n<Output>\n```lean4\n{proof}\n```\n</Output>\n")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let theorems: Vec<Theorem> = (1..=4)
        .map(|i| {
            Theorem::new(
                format!("add_comm_{i}"),
                format!("Show that $n + {i} = {i} + n$."),
                format!("theorem add_comm_{i} (n : ℕ) : n + {i} = {i} + n := by"),
            )
        })
        .collect();

    // prover stage: two samples each, only add_comm_1 gets it right
    // correction round: one sample each, add_comm_2 and add_comm_3 get fixed
    let mut model = ScriptedMock::new().with_default(answer("  rfl"));
    let mut table = MockTable::default();
    for t in &theorems {
        model.push(&t.id, 0, 0, answer("  simp"));
        model.push(&t.id, 0, 1, answer("  exact Nat.add_comm n _"));
    }
    table.insert("add_comm_1", "  exact Nat.add_comm n _", Verdict::pass());
    for id in ["add_comm_2", "add_comm_3"] {
        model.push(id, 1, 0, answer("  omega"));
        table.insert(id, "  omega", Verdict::pass());
    }
    let verifier = MockVerifier::new(table);
    let engine = PromptEngine::default();
    let config = PipelineConfig {
        problem_set_id: "demo".into(),
        budget: Budget::new(2, 1, 1),
        workers: 2,
        ..Default::default()
    };
    let report = Pipeline::new(config, &engine, &model, &verifier).run(&theorems)?;

    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    let scratch = tempfile::tempdir()?;
    let dir = out.unwrap_or_else(|| scratch.path().join("demo"));
    write_report_dir(
        &dir,
        &report,
        &serde_json::json!({ "example": "mock_pipeline" }),
    )?;

    println!("{}", render_summary(&MetricsSummary::from_report(&report)));
    for a in &report.attempts {
        println!(
            "{} {:>6} parent={:?}",
            a.key(),
            a.status(),
            a.parent.as_ref().map(|p| p.to_string())
        );
    }
    println!("report written to {}", dir.display());
    Ok(())
}
