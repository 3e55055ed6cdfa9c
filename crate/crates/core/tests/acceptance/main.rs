//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod frost;
mod network;
mod oracle;

use std::process::ExitCode;
use std::time::{Duration, Instant};

pub struct Verdict {
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

type Criterion = (u32, &'static str, fn() -> Verdict);

const CRITERIA: &[Criterion] = &[
    (1, "honest delivery", network::honest_delivery),
    (2, "consistency under double-spend", network::double_spend),
    (3, "weak causal order", network::weak_causal_order),
    (4, "message complexity growth", network::message_complexity),
    (5, "threshold signing correctness", frost::threshold_signing),
    (6, "key generation robustness", frost::keygen_robustness),
    (7, "static key across refresh", frost::refresh_keeps_key),
    (8, "intrinsic validity oracle", oracle::intrinsic_validity),
    (9, "burn-mint conservation", network::conservation),
    (10, "finality and monotonicity", network::finality),
];

fn fmt_elapsed(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags; a positional argument filters by
    // criterion number.
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, check) in CRITERIA {
        if !only.is_empty() && !only.contains(id) {
            continue;
        }
        let started = Instant::now();
        let v = check();
        let status = if v.passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {status}: {name} [{}] {}",
            fmt_elapsed(started.elapsed()),
            v.detail
        );
        failed += usize::from(!v.passed);
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
