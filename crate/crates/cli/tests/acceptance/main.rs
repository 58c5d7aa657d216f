//! Acceptance checks. Each criterion prints one PASS or FAIL line; the
//! process exits non-zero if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

mod cli;
mod designs;
mod fits;
mod models;

/// Outcome detail on success, reason on failure.
pub type Check = Result<String, String>;

type Criterion = (&'static str, fn() -> Check);

pub fn within(elapsed: Duration, limit: Duration) -> Check {
    if elapsed <= limit {
        Ok(format!("{:.1}s", elapsed.as_secs_f64()))
    } else {
        Err(format!("took {:.1}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs()))
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("design feasibility fuzz", designs::feasibility_fuzz),
        ("maximin monotonicity", designs::maximin_monotonicity),
        ("small-instance optimality", designs::small_instance_optimality),
        ("gradient check", models::gradient_check),
        ("closed-loop recovery", fits::closed_loop_recovery),
        ("model-richness ordering", fits::model_richness_ordering),
        ("candidate count", models::candidate_count),
        ("forward-selection recovery", fits::forward_selection_recovery),
        ("ingestion anchor", models::ingestion_anchor),
        ("evaluation anchors", models::evaluation_anchors),
        ("end-to-end cli", cli::end_to_end),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let number = i + 1;
        let label = format!("{number:>2} {name}");
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str()) || *f == number.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {label}: {detail} [{secs:.1}s]"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {label}: {reason} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
