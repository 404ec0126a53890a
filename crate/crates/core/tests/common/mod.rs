//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use lean_collab::parse::{extract_code_blocks, Rejection};
use serde::Deserialize;

use lean_collab::llm::{
    Completion, FinishReason, FnGenerator, Generator, LlmError, RequestKey, ScriptedMock,
};
use lean_collab::model::{Budget, Diagnostic, DiagnosticKind, RunReport, Theorem, Verdict};
use lean_collab::orchestrator::{
    write_report_dir, Pipeline, PipelineConfig, PipelineState, ATTEMPTS_FILE,
};
use lean_collab::prompt::{PromptEngine, RenderedPrompt};
use lean_collab::verifier::{FnVerifier, Verifier};

pub const PASS_TACTIC: &str = "omega";

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn lean_output(proof: &str) -> String {
    format!("<Thought>\nworking\n</Thought>\n<Output>\n```lean4\n{proof}\n```\n</Output>\n")
}

pub fn problems(n: usize) -> Vec<Theorem> {
    (0..n)
        .map(|i| {
            Theorem::new(
                format!("p{i:03}"),
                format!("Show that $a + {i} = {i} + a$."),
                format!("theorem p{i:03} (a : ℕ) : a + {i} = {i} + a := by"),
            )
        })
        .collect()
}

/// theorem id → (round, sample) of the one attempt that passes.
pub type SolvePlan = BTreeMap<String, (u32, u32)>;

/// Passes exactly the planned attempt; every other attempt is a distinct
/// failing proof. Token counts are a pure function of the key.
pub fn plan_generator(plan: SolvePlan) -> impl Generator {
    FnGenerator(
        move |key: &RequestKey, sample: u32, _: &RenderedPrompt| -> Result<Completion, LlmError> {
            let hit = plan.get(&key.theorem_id) == Some(&(key.round, sample));
            let proof = if hit {
                format!("  {PASS_TACTIC}")
            } else {
                format!(
                    "  simp only [Nat.add_comm]\n  exact rfl_{}_{}",
                    key.round, sample
                )
            };
            Ok(Completion {
                text: lean_output(&proof),
                tokens_generated: 100 + u64::from(key.round) * 10 + u64::from(sample),
                finish_reason: FinishReason::Stop,
            })
        },
    )
}

pub fn marker_verifier() -> impl Verifier {
    FnVerifier(|t: &Theorem, proof: &str| {
        if proof.contains(PASS_TACTIC) {
            Verdict::pass()
        } else {
            Verdict::fail(vec![Diagnostic::error(
                Some(2),
                format!(
                    "unsolved goals\na : ℕ\n⊢ a + {0} = {0} + a",
                    t.id.trim_start_matches('p')
                ),
            )])
        }
    })
}

/// Runs the mock pipeline over `n` synthetic theorems.
pub fn run_plan(n: usize, budget: Budget, plan: SolvePlan) -> RunReport {
    let engine = PromptEngine::default();
    let generator = plan_generator(plan);
    let verifier = marker_verifier();
    let config = PipelineConfig {
        problem_set_id: "synthetic".into(),
        budget,
        workers: 2,
        ..Default::default()
    };
    let pipeline = Pipeline::new(config, &engine, &generator, &verifier);
    pipeline.run(&problems(n)).expect("mock pipeline run")
}

/// Plan in which `per_round[r]` additional theorems first pass in round r.
pub fn cumulative_plan(per_round: &[usize]) -> SolvePlan {
    let mut plan = SolvePlan::new();
    let mut next = 0;
    for (round, &count) in per_round.iter().enumerate() {
        for _ in 0..count {
            plan.insert(format!("p{next:03}"), (round as u32, 0));
            next += 1;
        }
    }
    plan
}

/// Independent half-up percent oracle: decimal long division to three
/// places, then round on the third digit.
pub fn oracle_percent(num: u64, den: u64) -> String {
    let thousandths = num * 100_000 / den;
    let hundredths = thousandths / 10 + u64::from(thousandths % 10 >= 5);
    format!("{}.{:02}%", hundredths / 100, hundredths % 100)
}

/// Small deterministic generator for test data.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n.max(1)
    }
}

const TACTICS: &[&str] = &[
    "simp",
    "ring_nf",
    "nlinarith [sq_nonneg (a - b)]",
    "norm_num",
    "omega",
    "linarith",
];
const MESSAGES: &[&str] = &[
    "unsolved goals\na b : ℝ\n⊢ a * b ≤ 1",
    "type mismatch\n  h₆\nhas type\n  z = 7 : Prop\nbut is expected to have type\n  f = -10 : Prop",
    "linarith failed to find a contradiction\ncase h1.h\n⊢ False\nfailed",
    "unexpected token 'with'; expected '{' or tactic",
    "unknown identifier 'Nat.foo'",
];

fn random_proof(rng: &mut SplitMix, fl: &str) -> String {
    let lines = 1 + rng.below(6);
    let body: Vec<String> = (0..lines)
        .map(|_| format!("  {}", TACTICS[rng.below(TACTICS.len() as u64) as usize]))
        .collect();
    format!("{fl}\n{}", body.join("\n"))
}

/// `n` valid records, a mix of prove and correction, over a pool of ids
/// small enough that ids repeat.
pub fn random_records(seed: u64, n: usize) -> Vec<lean_collab::dataset::Record> {
    use lean_collab::dataset::{CorrectionRecord, ProveRecord, Record, RecordSource};
    let mut rng = SplitMix(seed);
    (0..n)
        .map(|_| {
            let id = format!("thm_{}", rng.below(40));
            let fl = format!("theorem {id} (a b : ℝ) (h : a ≤ b) : a ≤ b := by");
            let nl = format!("Show that {} holds.", rng.below(1000));
            let correct = random_proof(&mut rng, &fl);
            if rng.below(2) == 0 {
                Record::Prove(ProveRecord {
                    theorem_id: id,
                    fl_statement: fl,
                    commented_fl_proof: correct,
                    nl_statement: nl,
                    source: RecordSource::Harvested,
                    nl_proof: (rng.below(3) == 0).then(|| "By the hypothesis.".to_string()),
                })
            } else {
                let diags: Vec<Diagnostic> = (0..1 + rng.below(3))
                    .map(|_| {
                        let line = (rng.below(5) > 0).then(|| 1 + rng.below(60) as u32);
                        Diagnostic::error(line, MESSAGES[rng.below(MESSAGES.len() as u64) as usize])
                    })
                    .collect();
                let mut incorrect = random_proof(&mut rng, &fl);
                if incorrect == correct {
                    incorrect.push_str("\n  exact h");
                }
                Record::Correction(CorrectionRecord {
                    theorem_id: id,
                    fl_statement: fl,
                    nl_statement: nl,
                    incorrect_fl_proof: incorrect,
                    error_log: lean_collab::parse::render_error_block(&diags).unwrap(),
                    error_messages: diags,
                    correct_fl_proof: correct,
                })
            }
        })
        .collect()
}

/// Outcome of one randomized run, checked at every round boundary.
#[derive(Default)]
struct Audit {
    violations: Vec<String>,
    previous_solved: BTreeSet<String>,
    boundaries: u32,
}

pub fn random_run(seed: u64) -> Result<(), String> {
    let mut rng = SplitMix(seed);
    let n = 1 + rng.below(50) as usize;
    let x = 1 + rng.below(16) as u32;
    let k = rng.below(4) as u32;
    let y = 1 + rng.below(8) as u32;
    let pass_per_mille = rng.below(400);
    let budget = Budget::new(x, k, y);
    let engine = PromptEngine::default();
    let generator = FnGenerator(move |key: &RequestKey, sample: u32, _: &RenderedPrompt| {
        let mut h = SplitMix(seed ^ (u64::from(key.round) << 40) ^ (u64::from(sample) << 20));
        for b in key.theorem_id.bytes() {
            h.0 ^= u64::from(b);
            h.next_u64();
        }
        let proof = if h.below(1000) < pass_per_mille {
            format!("  {PASS_TACTIC}")
        } else if h.below(10) == 0 {
            // no fence at all: parse error, exercises the fallback path
            return Ok(Completion {
                text: "I could not find a proof.".into(),
                tokens_generated: 7,
                finish_reason: FinishReason::Stop,
            });
        } else {
            format!("  simp\n  exact bogus_{sample}")
        };
        Ok::<_, LlmError>(Completion {
            text: lean_output(&proof),
            tokens_generated: 50,
            finish_reason: FinishReason::Stop,
        })
    });
    let verifier = marker_verifier();
    let audit = Arc::new(Mutex::new(Audit::default()));
    let sink = audit.clone();
    let mut pipeline = Pipeline::new(
        PipelineConfig {
            budget,
            workers: 1 + rng.below(3) as usize,
            batch_size: 1 + rng.below(4) as u32,
            ..Default::default()
        },
        &engine,
        &generator,
        &verifier,
    );
    pipeline.observer = Some(Box::new(move |state: &PipelineState| {
        let mut a = sink.lock().unwrap();
        a.boundaries += 1;
        a.violations.extend(state.check_boundary());
        let now: BTreeSet<String> = state.solved.keys().cloned().collect();
        if !a.previous_solved.is_subset(&now) {
            a.violations
                .push(format!("solved set shrank at round {}", state.round));
        }
        a.previous_solved = now;
    }));
    let theorems = problems(n);
    let report = pipeline.run(&theorems).map_err(|e| e.to_string())?;
    let audit = audit.lock().unwrap();
    let mut errors = audit.violations.clone();
    errors.extend(report.check_invariants());
    let mut per_theorem: BTreeMap<&str, u64> = BTreeMap::new();
    for a in &report.attempts {
        *per_theorem.entry(&a.theorem_id).or_default() += 1;
    }
    for (id, count) in per_theorem {
        if count > budget.per_theorem_cap() {
            errors.push(format!("{id}: {count} attempts > {budget}"));
        }
    }
    if report.solved.len() > n {
        errors.push("more solved than theorems".into());
    }
    if audit.boundaries == 0 {
        errors.push("observer never called".into());
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(format!(
            "seed {seed} (n={n}, {budget}): {}",
            errors.join("; ")
        ))
    }
}

pub fn scripted_fixture() -> ScriptedMock {
    let mut mock = ScriptedMock::new();
    for i in 0..6 {
        let id = format!("p{i:03}");
        for s in 0..4 {
            let proof = if (i + s) % 5 == 4 {
                format!("  {PASS_TACTIC}")
            } else {
                format!("  simp [h{s}]")
            };
            mock.push(&id, 0, s, lean_output(&proof));
        }
        for r in 1..=2 {
            for s in 0..2 {
                let proof = if i % 3 == r {
                    format!("  {PASS_TACTIC}")
                } else {
                    format!("  ring_nf\n  linarith [h{r}{s}]")
                };
                mock.push(&id, r, s, lean_output(&proof));
            }
        }
    }
    mock
}

pub fn scripted_run(dir: &Path, workers: usize) -> Vec<u8> {
    let engine = PromptEngine::default();
    let mock = scripted_fixture();
    let verifier = marker_verifier();
    let mut pipeline = Pipeline::new(
        PipelineConfig {
            budget: Budget::new(4, 2, 2),
            workers,
            ..Default::default()
        },
        &engine,
        &mock,
        &verifier,
    );
    pipeline.log_path = Some(dir.join("live.ndjson"));
    let report = pipeline.run(&problems(6)).unwrap();
    write_report_dir(dir, &report, &serde_json::json!({})).unwrap();
    fs::read(dir.join(ATTEMPTS_FILE)).unwrap()
}

#[derive(Deserialize)]
pub struct Case {
    pub transcript: String,
    pub fl_statement: Option<String>,
    pub expected_proof: Option<String>,
    pub rejection: Option<Rejection>,
    pub diagnostics: Vec<ExpectedDiag>,
}

#[derive(Deserialize)]
pub struct ExpectedDiag {
    pub line: u32,
    pub kind: DiagnosticKind,
    pub first_line: String,
}

pub fn manifest() -> Vec<Case> {
    let dir = fixtures().join("transcripts");
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

pub fn read_transcript(name: &str) -> String {
    fs::read_to_string(fixtures().join("transcripts").join(name)).unwrap()
}

/// Error blocks quoted in a transcript: the bash fences, in order.
pub fn quoted_error_log(raw: &str) -> String {
    extract_code_blocks(raw)
        .into_iter()
        .filter(|b| b.info == "bash")
        .map(|b| format!("```bash\n{}\n```\n", b.body))
        .collect()
}

/// Where a live smoke test can run: a lake project named by
/// `LEAN_COLLAB_PROJECT` (checked with the default Mathlib header), or a bare
/// `lean` on PATH (core Lean only, scratch project, no header).
pub fn live_verifier_config() -> Option<(
    lean_collab::verifier::VerifierConfig,
    Option<tempfile::TempDir>,
)> {
    use lean_collab::verifier::{VerifierConfig, VerifierMode};
    let base = VerifierConfig {
        mode: VerifierMode::Live,
        max_parallel_checks: 1,
        ..Default::default()
    };
    if let Some(root) = std::env::var_os("LEAN_COLLAB_PROJECT") {
        return Some((
            VerifierConfig {
                project_root: root.into(),
                ..base
            },
            None,
        ));
    }
    let on_path = std::env::var_os("PATH")
        .is_some_and(|p| std::env::split_paths(&p).any(|d| d.join("lean").is_file()));
    if !on_path {
        return None;
    }
    let scratch = tempfile::tempdir().ok()?;
    fs::write(scratch.path().join("lean-toolchain"), "").ok()?;
    let config = VerifierConfig {
        project_root: scratch.path().to_path_buf(),
        header_lines: Vec::new(),
        command: vec!["lean".into()],
        ..base
    };
    Some((config, Some(scratch)))
}

/// `None` when no toolchain is available.
pub fn live_smoke() -> Option<Result<(), String>> {
    use lean_collab::model::VerdictStatus;
    use lean_collab::verifier::{LiveVerifier, Verifier};
    let (config, _scratch) = live_verifier_config()?;
    let verifier = match LiveVerifier::new(config) {
        Ok(v) => v,
        Err(e) => return Some(Err(e.to_string())),
    };
    let trivial = Theorem::new("smoke_true", "", "theorem smoke_true : 2 + 2 = 4 := by");
    let typed = Theorem::new("smoke_type", "", "theorem smoke_type : (2 : Nat) = 2 := by");
    let check = |t: &Theorem, proof: &str| verifier.check(t, proof).map_err(|e| e.to_string());
    let run = || -> Result<(), String> {
        let v = check(&trivial, "  decide")?;
        if v.status != VerdictStatus::Pass {
            return Err(format!("trivial theorem: {} {:?}", v.status, v.diagnostics));
        }
        let v = check(&trivial, "  sorry")?;
        if v.status != VerdictStatus::Fail
            || !v
                .diagnostics
                .iter()
                .any(|d| d.kind == DiagnosticKind::ContainsSorry)
        {
            return Err(format!("sorry body: {} {:?}", v.status, v.diagnostics));
        }
        let v = check(&typed, "  exact \"two\"")?;
        if !v
            .diagnostics
            .iter()
            .any(|d| d.kind == DiagnosticKind::TypeMismatch)
        {
            return Err(format!("type error: {} {:?}", v.status, v.diagnostics));
        }
        Ok(())
    };
    Some(run())
}

pub fn with_tokens(tokens: &[u64]) -> RunReport {
    let mut report = run_plan(
        tokens.len(),
        Budget::new(1, 0, 1),
        cumulative_plan(&[tokens.len()]),
    );
    assert_eq!(report.attempts.len(), tokens.len());
    for (a, &t) in report.attempts.iter_mut().zip(tokens) {
        a.tokens_generated = t;
    }
    report
}

/// 50 attempts whose sum is `hundredths / 100 × 50`.
pub fn tokens_with_mean(hundredths: u64) -> Vec<u64> {
    let sum = hundredths * 50 / 100;
    let mut v: Vec<u64> = (0..49).map(|i| sum / 50 + (i % 7) * 3 - 9).collect();
    let rest = sum - v.iter().sum::<u64>();
    v.push(rest);
    v
}
