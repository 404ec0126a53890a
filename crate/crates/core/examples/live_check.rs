//! Check one proof with the real toolchain.
//!
//! cargo run --example live_check -- PROJECT_ROOT [PROOF_FILE]
//!
//! PROJECT_ROOT is a lake project with Mathlib built. Without PROOF_FILE a
//! small built-in proof is checked.

use lean_collab::model::Theorem;
use lean_collab::verifier::{LiveVerifier, Verifier, VerifierConfig, VerifierError, VerifierMode};

fn main() {
    let mut args = std::env::args().skip(1);
    let Some(root) = args.next() else {
        eprintln!("usage: live_check PROJECT_ROOT [PROOF_FILE]");
        std::process::exit(2);
    };
    let theorem = Theorem::new(
        "mathd_numbertheory_3",
        "What is the units digit of the sum of the squares of the first nine positive integers? Show that it is 5.",
        "theorem mathd_numbertheory_3 : (∑ x in Finset.range 10, (x + 1) ^ 2) % 10 = 5 := by",
    );
    let proof = match args.next() {
        Some(path) => std::fs::read_to_string(path).expect("readable proof file"),
        None => "  decide".to_string(),
    };
    let config = VerifierConfig {
        mode: VerifierMode::Live,
        project_root: root.into(),
        timeout_secs: 300,
        ..Default::default()
    };
    let verifier = match LiveVerifier::new(config) {
        Ok(v) => v,
        Err(VerifierError::VerifierUnavailable(why)) => {
            eprintln!("verifier unavailable: {why}");
            std::process::exit(4);
        }
        Err(e) => panic!("{e}"),
    };
    match verifier.check(&theorem, &proof) {
        Ok(v) => {
            println!("{} in {:.1}s", v.status, v.wall_time);
            for d in &v.diagnostics {
                println!("line {:?} {:?}\n{}", d.line, d.kind, d.message);
            }
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(4);
        }
    }
}
