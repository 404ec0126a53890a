//! Pull the proof out of a model transcript and parse any quoted error
//! blocks.
//!
//! cargo run --example parse_transcript [FILE]

use lean_collab::parse::{extract_code_blocks, parse_model_output, parse_verifier_log, LogFormat};

const SAMPLE: &str = r#"<Thought>
The error says the goal is still open after `norm_num`:
```bash
line 2
unsolved goals
x : ℝ
h₀ : x + 3 = 7
⊢ x = 4
```
So I should finish with linarith.
</Thought>
<Output>
```lean4
theorem demo (x : ℝ) (h₀ : x + 3 = 7) : x = 4 := by
  norm_num at h₀
  linarith
```
</Output>
"#;

fn main() -> std::io::Result<()> {
    let raw = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => SAMPLE.to_string(),
    };
    let parsed = parse_model_output(&raw);
    println!("lean candidates: {}", parsed.lean_candidates);
    match (&parsed.chosen_proof, &parsed.rejection) {
        (Some(proof), _) => println!("chosen proof:\n{proof}"),
        (None, Some(why)) => println!("rejected: {why:?}"),
        (None, None) => println!("nothing usable"),
    }

    let quoted: String = extract_code_blocks(&raw)
        .into_iter()
        .filter(|b| b.info == "bash")
        .map(|b| format!("```bash\n{}\n```\n", b.body))
        .collect();
    for d in parse_verifier_log(&quoted, LogFormat::Block) {
        let first = d.message.lines().next().unwrap_or("");
        println!("quoted diagnostic: line {:?} {:?}: {first}", d.line, d.kind);
    }

    // the checker's own output format
    let native = "/tmp/check.lean:7:2: error: type mismatch\n  h\nhas type\n  a = b : Prop\nbut is expected to have type\n  b = a : Prop\n";
    for d in parse_verifier_log(native, LogFormat::LeanNative) {
        println!(
            "native diagnostic: {}:{} {:?}",
            d.line.unwrap_or(0),
            d.column.unwrap_or(0),
            d.kind
        );
    }
    Ok(())
}
