//! One line per acceptance criterion. Runs as a plain binary so the lines
//! show up in `cargo test` output without `--nocapture`.

mod common;

use std::io::Cursor;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{cumulative_plan, oracle_percent, run_plan};
use lean_collab::dataset::{curriculum_sort, read_records, write_records, Record};
use lean_collab::metrics::{cumulative_by_round, Accuracy, MetricsSummary};
use lean_collab::model::Budget;
use lean_collab::parse::{
    parse_model_output_for, parse_verifier_log, render_error_block, LogFormat,
};

type Check = fn() -> Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn final_accuracy() -> Result<(), String> {
    for (per_round, budget, want) in [
        (vec![120, 29], Budget::new(2, 1, 1), "61.07%"),
        (vec![135], Budget::new(2, 0, 1), "55.33%"),
    ] {
        let solved: usize = per_round.iter().sum();
        let s = MetricsSummary::from_report(&run_plan(244, budget, cumulative_plan(&per_round)));
        ensure!(s.accuracy == want, "{solved}/244 rendered {}", s.accuracy);
        ensure!(
            s.accuracy == oracle_percent(solved as u64, 244),
            "oracle disagrees at {solved}"
        );
    }
    Ok(())
}

fn cumulative_rows() -> Result<(), String> {
    for (per_round, printed) in [
        ([126, 4, 3, 2], ["51.64%", "53.28%", "54.51%", "55.33%"]),
        ([134, 11, 4, 2], ["54.92%", "59.43%", "61.07%", "61.89%"]),
    ] {
        let report = run_plan(244, Budget::new(1, 3, 1), cumulative_plan(&per_round));
        let row: Vec<String> = cumulative_by_round(&report)
            .iter()
            .map(Accuracy::percent)
            .collect();
        ensure!(row == printed, "{row:?}");
        let mut c = 0;
        for (r, n) in per_round.iter().enumerate() {
            c += *n as u64;
            ensure!(
                row[r] == oracle_percent(c, 244),
                "round {r}: oracle disagrees"
            );
        }
    }
    Ok(())
}

fn budget_accounting() -> Result<(), String> {
    (0..1000).try_for_each(common::random_run)
}

fn replay_determinism() -> Result<(), String> {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = common::scripted_run(a.path(), 4);
    let second = common::scripted_run(b.path(), 1);
    ensure!(!first.is_empty(), "empty attempt log");
    ensure!(first == second, "attempt logs differ");
    Ok(())
}

fn parser_corpus() -> Result<(), String> {
    let cases = common::manifest();
    ensure!(
        cases.iter().any(|c| c.rejection.is_some()),
        "no rejected case in corpus"
    );
    for case in cases {
        let raw = common::read_transcript(&case.transcript);
        let parsed = parse_model_output_for(&raw, case.fl_statement.as_deref());
        match &case.expected_proof {
            Some(path) => {
                let expected = common::read_transcript(path);
                ensure!(parsed.rejection.is_none(), "{}: rejected", case.transcript);
                ensure!(
                    parsed.chosen_proof.as_deref() == Some(expected.as_str()),
                    "{}: wrong chosen proof",
                    case.transcript
                );
            }
            None => ensure!(
                parsed.rejection == case.rejection && parsed.chosen_proof.is_none(),
                "{}: expected rejection {:?}, got {:?}",
                case.transcript,
                case.rejection,
                parsed.rejection
            ),
        }
        let diags = parse_verifier_log(&common::quoted_error_log(&raw), LogFormat::Block);
        ensure!(
            diags.len() == case.diagnostics.len(),
            "{}: diagnostic count",
            case.transcript
        );
        for (got, want) in diags.iter().zip(&case.diagnostics) {
            ensure!(
                got.line == Some(want.line)
                    && got.kind == want.kind
                    && got.message.lines().next() == Some(want.first_line.as_str()),
                "{}: {got:?}",
                case.transcript
            );
        }
        if !diags.is_empty() {
            let text = render_error_block(&diags).map_err(|e| e.to_string())?;
            ensure!(
                parse_verifier_log(&text, LogFormat::Block) == diags,
                "{}: round trip",
                case.transcript
            );
        }
    }
    Ok(())
}

fn dataset_round_trip() -> Result<(), String> {
    let records = common::random_records(7, 500);
    let mut buf = Vec::new();
    write_records(&mut buf, &records).map_err(|e| e.to_string())?;
    let back = read_records(Cursor::new(buf)).map_err(|e| e.to_string())?;
    ensure!(back == records, "records changed across serialization");
    for r in &records {
        if let Record::Correction(c) = r {
            ensure!(
                c.provenance_holds(),
                "{}: error_messages do not match log",
                c.theorem_id
            );
        }
    }
    let mut sorted = records.clone();
    curriculum_sort(&mut sorted);
    let mut indexed: Vec<(usize, &Record)> = records.iter().enumerate().collect();
    indexed.sort_by_key(|(i, r)| (r.difficulty(), *i));
    ensure!(
        sorted.iter().eq(indexed.iter().map(|(_, r)| *r)),
        "curriculum_sort is not a stable permutation"
    );
    Ok(())
}

fn token_accounting() -> Result<(), String> {
    let path = common::fixtures().join("tokens_20.json");
    let fx: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let tokens: Vec<u64> = fx["tokens"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|v| v.as_u64())
        .collect();
    ensure!(
        tokens.len() == 20 && tokens.iter().sum::<u64>() == fx["sum"].as_u64().unwrap_or(0),
        "bad fixture"
    );
    let s = MetricsSummary::from_report(&common::with_tokens(&tokens));
    ensure!(
        s.avg_tokens_rendered.as_deref() == fx["mean"].as_str(),
        "mean {:?}",
        s.avg_tokens_rendered
    );
    for (hundredths, printed) in [(65754, "657.54"), (49210, "492.10")] {
        let s = MetricsSummary::from_report(&common::with_tokens(&common::tokens_with_mean(
            hundredths,
        )));
        ensure!(
            s.avg_tokens_rendered.as_deref() == Some(printed),
            "{:?} != {printed}",
            s.avg_tokens_rendered
        );
    }
    Ok(())
}

fn main() {
    let criteria: [(u32, &str, Check, Duration); 7] = [
        (
            1,
            "final accuracy replay",
            final_accuracy,
            Duration::from_secs(1),
        ),
        (
            2,
            "cumulative round rows",
            cumulative_rows,
            Duration::from_secs(1),
        ),
        (
            3,
            "budget accounting, 1000 random runs",
            budget_accounting,
            Duration::from_secs(30),
        ),
        (
            4,
            "replay determinism",
            replay_determinism,
            Duration::from_secs(10),
        ),
        (5, "parser corpus", parser_corpus, Duration::from_secs(5)),
        (
            6,
            "dataset round trip",
            dataset_round_trip,
            Duration::from_secs(10),
        ),
        (
            7,
            "token accounting",
            token_accounting,
            Duration::from_secs(1),
        ),
    ];
    // keep panics from helper asserts on one line
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, check, limit) in criteria {
        let started = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| Err(panic_text(p.as_ref())));
        let took = started.elapsed();
        let outcome = outcome.and_then(|()| {
            if took <= limit {
                Ok(())
            } else {
                Err(format!("over the {limit:?} limit"))
            }
        });
        match outcome {
            Ok(()) => println!("criterion {n} PASS  {name} ({took:.2?})"),
            Err(e) => {
                failed += 1;
                println!("criterion {n} FAIL  {name} ({took:.2?}): {e}");
            }
        }
    }
    let started = Instant::now();
    match catch_unwind(common::live_smoke).unwrap_or_else(|p| Some(Err(panic_text(p.as_ref())))) {
        None => println!("criterion 8 SKIP  live verifier smoke (no Lean toolchain found)"),
        Some(Ok(())) if started.elapsed() <= Duration::from_secs(300) => {
            println!(
                "criterion 8 PASS  live verifier smoke ({:.2?})",
                started.elapsed()
            )
        }
        Some(outcome) => {
            failed += 1;
            let e = outcome
                .err()
                .unwrap_or_else(|| "over the 5 min limit".into());
            println!("criterion 8 FAIL  live verifier smoke: {e}");
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn panic_text(p: &(dyn std::any::Any + Send)) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}
