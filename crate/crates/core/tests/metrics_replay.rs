mod common;

use std::fs;

use common::{cumulative_plan, oracle_percent, run_plan};
use lean_collab::metrics::{
    avg_tokens_ratio, cumulative_by_round, merge_cumulative, render_split_table, Accuracy,
    MetricsSummary, SplitRow,
};
use lean_collab::model::Budget;

#[test]
fn final_accuracy_149_of_244() {
    let report = run_plan(244, Budget::new(2, 1, 1), cumulative_plan(&[120, 29]));
    let s = MetricsSummary::from_report(&report);
    assert_eq!(s.accuracy, "61.07%");
    assert_eq!(s.accuracy, oracle_percent(149, 244));
    assert_eq!(s.solved_by_round, vec![120, 149]);
}

#[test]
fn final_accuracy_135_of_244() {
    let report = run_plan(244, Budget::new(2, 0, 1), cumulative_plan(&[135]));
    let s = MetricsSummary::from_report(&report);
    assert_eq!(s.accuracy, "55.33%");
    assert_eq!(s.accuracy, oracle_percent(135, 244));
    assert_eq!(s.budget_label, "pass@2");
}

#[test]
fn cumulative_rows_match_printed_values() {
    for (per_round, printed) in [
        ([126, 4, 3, 2], ["51.64%", "53.28%", "54.51%", "55.33%"]),
        ([134, 11, 4, 2], ["54.92%", "59.43%", "61.07%", "61.89%"]),
    ] {
        let report = run_plan(244, Budget::new(1, 3, 1), cumulative_plan(&per_round));
        let row: Vec<String> = cumulative_by_round(&report)
            .iter()
            .map(Accuracy::percent)
            .collect();
        assert_eq!(row, printed);
        let mut c = 0;
        for (r, &n) in per_round.iter().enumerate() {
            c += n as u64;
            assert_eq!(row[r], oracle_percent(c, 244));
        }
    }
}

#[test]
fn percent_oracle_agrees_everywhere() {
    for c in 0..=244 {
        assert_eq!(
            Accuracy::new(c, 244).percent(),
            oracle_percent(c, 244),
            "{c}"
        );
    }
}

#[test]
fn split_average_is_unweighted_mean() {
    let rows = [SplitRow {
        label: "collab".into(),
        budget: Budget::new(64, 2, 32).to_string(),
        splits: vec![Accuracy::new(161, 244), Accuracy::new(156, 244)],
    }];
    let table = render_split_table(&["valid", "test"], &rows);
    let line = table.lines().nth(1).unwrap();
    assert!(line.contains("64 + 32 × 2"), "{line}");
    assert!(
        line.contains("65.98%") && line.contains("63.93%") && line.contains("64.96%"),
        "{line}"
    );
    assert_eq!(oracle_percent(161 + 156, 488), "64.96%");
}

#[test]
fn merged_reports_count_any_solve() {
    let a = run_plan(10, Budget::new(1, 1, 1), cumulative_plan(&[3, 1]));
    let mut plan = cumulative_plan(&[0, 0]);
    plan.insert("p008".into(), (0, 0));
    plan.insert("p000".into(), (1, 0));
    let b = run_plan(10, Budget::new(1, 1, 1), plan);
    let m = merge_cumulative(&[&a, &b]).unwrap();
    // p000..p002 in round 0 (a), p008 round 0 (b), p003 round 1 (a)
    assert_eq!(m.solved_by_round, vec![4, 5]);
}

#[test]
fn hand_summed_token_mean() {
    let fx: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(common::fixtures().join("tokens_20.json")).unwrap(),
    )
    .unwrap();
    let tokens: Vec<u64> = fx["tokens"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(tokens.len(), 20);
    assert_eq!(tokens.iter().sum::<u64>(), fx["sum"].as_u64().unwrap());
    let report = common::with_tokens(&tokens);
    let s = MetricsSummary::from_report(&report);
    assert_eq!(s.avg_tokens_rendered.as_deref(), fx["mean"].as_str());
    assert_eq!(avg_tokens_ratio(&report).unwrap().two_decimals(), "470.15");
}

#[test]
fn token_ratio_experiment_values() {
    for (hundredths, printed) in [(65754, "657.54"), (49210, "492.10")] {
        let report = common::with_tokens(&common::tokens_with_mean(hundredths));
        let s = MetricsSummary::from_report(&report);
        assert_eq!(s.avg_tokens_rendered.as_deref(), Some(printed));
        assert!((s.avg_tokens_generated.unwrap() - hundredths as f64 / 100.0).abs() < 1e-9);
    }
}

#[test]
fn token_estimate_tracks_reference_tokenizer() {
    let text = fs::read_to_string(common::fixtures().join("token_calibration.ndjson")).unwrap();
    let (mut estimated, mut reference) = (0u64, 0u64);
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        estimated += lean_collab::llm::estimate_tokens(row["text"].as_str().unwrap());
        reference += row["cl100k_tokens"].as_u64().unwrap();
    }
    let ratio = estimated as f64 / reference as f64;
    assert!((0.85..=1.15).contains(&ratio), "aggregate ratio {ratio:.3}");
}
