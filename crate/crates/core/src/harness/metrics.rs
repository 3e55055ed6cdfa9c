use serde::{Deserialize, Serialize};

use super::audit::RunAudit;

/// Reduction of many run audits. Counters are exact sums; the reduction is
/// independent of run order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub runs: usize,
    /// Mean over runs of the delivered fraction of (process, cert) pairs.
    pub delivery_rate: f64,
    /// Runs in which every correct process delivered every honest cert.
    pub full_delivery_runs: usize,
    pub full_delivery_fraction: f64,
    pub consistency_violations: u64,
    pub weak_causal_violations: u64,
    pub unsatisfied_deps: u64,
    pub duplicate_deliveries: u64,
    pub integrity_violations: u64,
    pub monotonicity_violations: u64,
    pub supply_violations: u64,
    pub supply_points: u64,
    pub converged_runs: usize,
    pub messages_mean: f64,
    pub messages_max: u64,
    pub latency_mean: f64,
    pub latency_p50: f64,
    pub latency_p99: f64,
    pub latency_max: f64,
    pub pending_high_water: usize,
    pub pending_collected: u64,
    pub gate_drops: u64,
    pub keygen_exclusions: u64,
    pub signing_exclusions: u64,
    pub bogus_echoes: u64,
    pub bogus_delivered: u64,
    pub honest_submissions: u64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

impl MetricsSummary {
    pub fn reduce(audits: &[RunAudit]) -> Self {
        let mut m = Self {
            runs: audits.len(),
            ..Self::default()
        };
        let mut latencies = Vec::new();
        let mut msg_sum = 0.0;
        let mut rate_sum = 0.0;
        for a in audits {
            rate_sum += a.delivery_rate();
            m.full_delivery_runs += usize::from(a.all_delivered);
            m.consistency_violations += a.consistency_violations;
            m.weak_causal_violations += a.weak_causal_violations;
            m.unsatisfied_deps += a.unsatisfied_deps;
            m.duplicate_deliveries += a.duplicate_deliveries;
            m.integrity_violations += a.integrity_violations;
            m.monotonicity_violations += a.monotonicity_violations;
            m.supply_violations += a.supply_violations;
            m.supply_points += a.supply_points;
            m.converged_runs += usize::from(a.converged);
            msg_sum += a.messages_mean;
            m.messages_max = m.messages_max.max(a.messages_max);
            m.pending_high_water = m.pending_high_water.max(a.pending_high_water);
            m.pending_collected += a.pending_collected;
            m.gate_drops += a.gate_drops;
            m.keygen_exclusions += a.keygen_exclusions;
            m.signing_exclusions += a.signing_exclusions;
            m.bogus_echoes += a.bogus_echoes;
            m.bogus_delivered += a.bogus_delivered;
            m.honest_submissions += a.honest_submissions;
            latencies.extend_from_slice(&a.latencies);
        }
        if !audits.is_empty() {
            m.delivery_rate = rate_sum / audits.len() as f64;
            m.messages_mean = msg_sum / audits.len() as f64;
            m.full_delivery_fraction = m.full_delivery_runs as f64 / audits.len() as f64;
        }
        latencies.sort_by(f64::total_cmp);
        if !latencies.is_empty() {
            m.latency_mean = latencies.iter().sum::<f64>() / latencies.len() as f64;
        }
        m.latency_p50 = quantile(&latencies, 0.5);
        m.latency_p99 = quantile(&latencies, 0.99);
        m.latency_max = latencies.last().copied().unwrap_or(0.0);
        m
    }

    /// Value of a named metric, as used by scenario assertions.
    pub fn metric(&self, name: &str) -> Option<f64> {
        let v = serde_json::to_value(self).ok()?;
        v.get(name)?.as_f64()
    }

    pub fn csv_header() -> String {
        Self::field_names().join(",")
    }

    pub fn to_csv_row(&self) -> String {
        let v = serde_json::to_value(self).expect("summary serialises");
        Self::field_names()
            .iter()
            .map(|k| v[k].to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    fn field_names() -> Vec<String> {
        match serde_json::to_value(Self::default()) {
            Ok(serde_json::Value::Object(map)) => map.keys().cloned().collect(),
            _ => Vec::new(),
        }
    }
}
