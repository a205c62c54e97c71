//! Acceptance run: one PASS/FAIL line per criterion, followed by the
//! individual measurements. Exits non-zero if any criterion fails.

use std::time::Instant;

use qnlchain::checks::{self, outcome_or_error, CriterionOutcome};
use qnlchain::Result;

fn main() {
    type Check = fn() -> Result<CriterionOutcome>;
    let all: [(u32, Check); 10] = [
        (1, checks::criterion_1),
        (2, checks::criterion_2),
        (3, checks::criterion_3),
        (4, checks::criterion_4),
        (5, checks::criterion_5),
        (6, checks::criterion_6),
        (7, checks::criterion_7),
        (8, checks::criterion_8),
        (9, checks::criterion_9),
        (10, checks::criterion_10),
    ];
    let mut failed = Vec::new();
    for (id, check) in all {
        let start = Instant::now();
        let o = outcome_or_error(id, check());
        println!("{} ({:.1} s)", o.line(), start.elapsed().as_secs_f64());
        for d in &o.details {
            println!("    {d}");
        }
        if !o.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
