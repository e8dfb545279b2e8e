//! Scores a noisy prediction against gold and renders the evaluation report.

use prefrank::bws::{Provenance, ScoreVector};
use prefrank::eval::{evaluate, render_report};

fn main() -> prefrank::Result<()> {
    let ids: Vec<String> = (0..30).map(|i| format!("doc{i:02}")).collect();
    let gold: Vec<f64> = (0..30).map(|i| (i as f64 - 14.5) / 15.0).collect();
    // swap a few neighbours so the ranking is close but not exact
    let mut pred = gold.clone();
    for i in (0..28).step_by(5) {
        pred.swap(i, i + 1);
    }
    let gold = ScoreVector::new(ids.clone(), gold, Provenance::Bws)?;
    let pred = ScoreVector::new(ids, pred, Provenance::External)?;
    let report = evaluate("swapped", &pred, &gold, None, None)?;
    print!("{}", render_report(&report));
    Ok(())
}
