//! Accuracy tables from solve counts: per-split comparison with an average
//! column, and cumulative accuracy by correction round.
//!
//! cargo run --example metrics_tables

use lean_collab::metrics::{
    average_accuracy, cumulative_counts, merge_solve_maps, render_percent, render_round_table,
    render_split_table, Accuracy, SolveMap, SplitRow,
};
use lean_collab::model::Budget;

fn main() {
    let rows = vec![
        SplitRow {
            label: "prover only".into(),
            budget: Budget::new(128, 0, 1).to_string(),
            splits: vec![Accuracy::new(150, 244), Accuracy::new(146, 244)],
        },
        SplitRow {
            label: "prover + corrector".into(),
            budget: Budget::new(64, 2, 32).to_string(),
            splits: vec![Accuracy::new(161, 244), Accuracy::new(156, 244)],
        },
    ];
    println!("{}", render_split_table(&["valid", "test"], &rows));
    let avg = average_accuracy(&rows[1].splits).expect("non-empty");
    println!("average of the second row: {}\n", avg.percent());

    // two runs over the same problems; a theorem counts once, at its earliest round
    let a: SolveMap = [("t1", 0), ("t2", 1), ("t3", 2)]
        .map(|(k, r)| (k.to_string(), r))
        .into();
    let b: SolveMap = [("t2", 0), ("t4", 3)]
        .map(|(k, r)| (k.to_string(), r))
        .into();
    let merged = merge_solve_maps(&a, &b);
    let total = 8;
    let row = |m: &SolveMap| -> Vec<Accuracy> {
        cumulative_counts(m, 4)
            .into_iter()
            .map(|c| Accuracy::new(c, total))
            .collect()
    };
    println!(
        "{}",
        render_round_table(&[
            ("run a".into(), row(&a)),
            ("run b".into(), row(&b)),
            ("merged".into(), row(&merged))
        ])
    );
    println!(
        "rounding is half-up on exact counts: 1/8 = {}, 1/3 = {}",
        render_percent(1, 8),
        render_percent(1, 3)
    );
}
