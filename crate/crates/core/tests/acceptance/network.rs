use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use tce_core::certificate::Digest;
use tce_core::harness::{run_scenario, scenarios, sweep_message_complexity, ScenarioReport, SweepOptions};
use tce_core::simnet::{run, TraceRecord};

use crate::Verdict;

static HONEST: OnceLock<(ScenarioReport, Duration)> = OnceLock::new();
static DOUBLE_SPEND: OnceLock<ScenarioReport> = OnceLock::new();

fn honest_report() -> &'static (ScenarioReport, Duration) {
    HONEST.get_or_init(|| {
        let started = Instant::now();
        let r = run_scenario(&scenarios::honest_delivery(200, 100), false).expect("scenario runs");
        (r, started.elapsed())
    })
}

fn double_spend_report() -> &'static ScenarioReport {
    DOUBLE_SPEND.get_or_init(|| run_scenario(&scenarios::double_spend(200, 0.1, 100), false).expect("scenario runs"))
}

pub fn honest_delivery() -> Verdict {
    let (r, elapsed) = honest_report();
    let m = &r.metrics;
    let passed = m.runs == 100 && m.full_delivery_runs >= 99 && m.honest_submissions > 0 && *elapsed < Duration::from_secs(120);
    Verdict::new(
        passed,
        format!(
            "n=200 f=0: {}/{} runs with full delivery, delivery rate {:.5}, latency p50 {:.2} p99 {:.2}, wall {:.1}s (limit 120s)",
            m.full_delivery_runs,
            m.runs,
            m.delivery_rate,
            m.latency_p50,
            m.latency_p99,
            elapsed.as_secs_f64()
        ),
    )
}

pub fn double_spend() -> Verdict {
    let r = double_spend_report();
    let m = &r.metrics;
    let runs_with_violation = r.audits.iter().filter(|a| a.consistency_violations > 0).count();
    Verdict::new(
        m.runs == 100 && runs_with_violation == 0,
        format!(
            "n=200 f=0.1 equivocating: {runs_with_violation}/{} runs with conflicting deliveries, honest delivery rate {:.4}",
            m.runs, m.delivery_rate
        ),
    )
}

pub fn weak_causal_order() -> Verdict {
    let (h, _) = honest_report();
    let d = double_spend_report();
    let causal = h.metrics.weak_causal_violations + d.metrics.weak_causal_violations;
    let deps = h.metrics.unsatisfied_deps + d.metrics.unsatisfied_deps;
    let deliveries: usize = h.audits.iter().chain(&d.audits).map(|a| a.delivered_pairs).sum();
    Verdict::new(
        causal == 0 && deps == 0,
        format!("{} runs, {deliveries} honest deliveries audited: {causal} causal-order violations, {deps} unsatisfied deps", h.audits.len() + d.audits.len()),
    )
}

pub fn message_complexity() -> Verdict {
    let started = Instant::now();
    let main = sweep_message_complexity(&SweepOptions::default()).expect("sweep runs");
    let control = sweep_message_complexity(&SweepOptions {
        fixed_sample_size: Some(20),
        ..SweepOptions::default()
    })
    .expect("control sweep runs");
    let elapsed = started.elapsed();
    let rows: Vec<String> = main.rows.iter().map(|r| format!("n={} mean {:.2}±{:.2}", r.n, r.mean, r.ci95)).collect();
    Verdict::new(
        main.within_tolerance && elapsed < Duration::from_secs(600),
        format!(
            "{}; ratio {:.3} vs ln-ratio {:.3} (±30%); fixed-size control ratio {:.3}; wall {:.1}s (limit 600s)",
            rows.join(", "),
            main.observed_ratio,
            main.predicted_ratio,
            control.observed_ratio,
            elapsed.as_secs_f64()
        ),
    )
}

pub fn conservation() -> Verdict {
    let s = scenarios::conservation(30, 500, 1);
    let trace = run(s.config_for(0)).expect("scenario runs");
    let supplies: Vec<u128> = trace
        .records
        .iter()
        .filter_map(|r| match r {
            TraceRecord::Supply { total, .. } => Some(*total),
            _ => None,
        })
        .collect();
    let genesis: u128 = s
        .config
        .subnets
        .iter()
        .flat_map(|n| &n.balances)
        .map(|b| u128::from(b.amount))
        .sum();
    let moved = trace
        .records
        .iter()
        .filter(|r| matches!(r, TraceRecord::Submit { honest: true, .. }))
        .count();
    let off: usize = supplies.iter().filter(|t| **t != genesis).count();
    Verdict::new(
        !supplies.is_empty() && off == 0,
        format!(
            "3 subnets, 500 transfers, {moved} certificates: {} supply points, {off} differ from genesis supply {genesis}",
            supplies.len()
        ),
    )
}

pub fn finality() -> Verdict {
    let s = scenarios::reorg(200, 0.1, 20);
    let r = run_scenario(&s, true).expect("scenario runs");
    let mut reorg_deliveries = 0;
    let mut first_deliveries = 0;
    for trace in &r.traces {
        let byz: BTreeSet<u32> = match &trace.records[0] {
            TraceRecord::Start { byzantine, .. } => byzantine.iter().copied().collect(),
            _ => BTreeSet::new(),
        };
        let Some([first, second]) = trace.records.iter().find_map(|r| match r {
            TraceRecord::Equivocate { certs, .. } => Some(*certs),
            _ => None,
        }) else {
            continue;
        };
        for rec in &trace.records {
            if let TraceRecord::WcprbDeliver { process, cert, .. } = rec {
                if byz.contains(process) {
                    continue;
                }
                let c: Digest = *cert;
                first_deliveries += usize::from(c == first);
                reorg_deliveries += usize::from(c == second);
            }
        }
    }
    let m = &r.metrics;
    Verdict::new(
        m.monotonicity_violations == 0 && reorg_deliveries == 0 && m.consistency_violations == 0 && first_deliveries > 0,
        format!(
            "{} reorg runs: {} monotonicity violations, {first_deliveries} deliveries of the final certificate, {reorg_deliveries} of the conflicting one",
            m.runs, m.monotonicity_violations
        ),
    )
}
