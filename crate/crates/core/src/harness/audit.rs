//! Exact property checks over one run's trace.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::certificate::{Digest, StateCommitment, SubnetId};
use crate::prb::ProcessId;
use crate::simnet::{Trace, TraceRecord};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunAudit {
    pub seed: u64,
    pub n: usize,
    pub correct: usize,
    pub honest_certificates: usize,
    /// (correct process, honest certificate) pairs delivered.
    pub delivered_pairs: usize,
    pub all_delivered: bool,
    /// Slots for which correct processes accepted more than one certificate.
    pub consistency_violations: u64,
    /// Deliveries that do not extend the deliverer's chain for that subnet.
    pub weak_causal_violations: u64,
    /// Deliveries with a dependency the deliverer had not accepted before.
    pub unsatisfied_deps: u64,
    /// Certificates delivered twice by one process.
    pub duplicate_deliveries: u64,
    /// Delivered certificates that no subnet ever issued.
    pub integrity_violations: u64,
    /// Supply records that differ from the asset's first record.
    pub supply_violations: u64,
    pub supply_points: u64,
    pub monotonicity_violations: u64,
    /// All correct processes ended with the same accepted set.
    pub converged: bool,
    pub gate_drops: u64,
    pub messages_mean: f64,
    pub messages_max: u64,
    pub honest_submissions: u64,
    /// Event-time from submission to each (process, honest cert) delivery.
    pub latencies: Vec<f64>,
    pub pending_high_water: usize,
    pub pending_collected: u64,
    pub keygen_exclusions: u64,
    pub signing_exclusions: u64,
    /// Echo messages correct processes sent for certificates flagged as
    /// ill-formed.
    pub bogus_echoes: u64,
    pub bogus_delivered: u64,
    pub prb_deliveries: u64,
}

impl RunAudit {
    pub fn delivery_rate(&self) -> f64 {
        let expected = self.correct * self.honest_certificates;
        if expected == 0 {
            1.0
        } else {
            self.delivered_pairs as f64 / expected as f64
        }
    }
}

/// Audits a complete trace (one that ends with a summary record).
pub fn audit_trace(trace: &Trace) -> RunAudit {
    let mut a = RunAudit::default();
    let mut byzantine = BTreeSet::new();
    let mut genesis: BTreeMap<SubnetId, StateCommitment> = BTreeMap::new();
    let mut issued: HashSet<Digest> = HashSet::new();
    let mut honest: BTreeMap<Digest, f64> = BTreeMap::new();
    let mut bogus: HashSet<Digest> = HashSet::new();
    let mut bogus_payloads: HashSet<Digest> = HashSet::new();
    let mut slots: BTreeMap<(SubnetId, StateCommitment), BTreeSet<Digest>> = BTreeMap::new();
    let mut tips: BTreeMap<(ProcessId, SubnetId), StateCommitment> = BTreeMap::new();
    let mut accepted: BTreeMap<ProcessId, HashSet<Digest>> = BTreeMap::new();
    let mut first_supply: BTreeMap<String, u128> = BTreeMap::new();

    for r in &trace.records {
        match r {
            TraceRecord::Start { seed, n, byzantine: b, .. } => {
                a.seed = *seed;
                a.n = *n;
                byzantine = b.iter().copied().collect();
            }
            TraceRecord::Keygen { excluded, .. } => a.keygen_exclusions += excluded.len() as u64,
            TraceRecord::RegisterSubnet { subnet_id, genesis: g, .. } => {
                genesis.insert(*subnet_id, *g);
            }
            TraceRecord::Signing { excluded, .. } => a.signing_exclusions += excluded.len() as u64,
            TraceRecord::Submit { t, cert, honest: h, .. } => {
                issued.insert(*cert);
                if *h {
                    honest.insert(*cert, *t);
                }
            }
            TraceRecord::Equivocate { certs, .. } => issued.extend(certs.iter().copied()),
            TraceRecord::Bogus { cert, payload, .. } => {
                issued.insert(*cert);
                bogus.insert(*cert);
                bogus_payloads.insert(*payload);
            }
            TraceRecord::PrbDeliver { .. } => a.prb_deliveries += 1,
            TraceRecord::WcprbDeliver {
                t,
                process,
                cert,
                subnet_id,
                prev,
                state,
                deps,
                ..
            } => {
                if byzantine.contains(process) {
                    continue;
                }
                let mine = accepted.entry(*process).or_default();
                if deps.iter().any(|d| !mine.contains(d)) {
                    a.unsatisfied_deps += 1;
                }
                if !mine.insert(*cert) {
                    a.duplicate_deliveries += 1;
                }
                let tip = tips
                    .get(&(*process, *subnet_id))
                    .copied()
                    .or_else(|| genesis.get(subnet_id).copied());
                if tip != Some(*prev) {
                    a.weak_causal_violations += 1;
                }
                tips.insert((*process, *subnet_id), *state);
                slots.entry((*subnet_id, *prev)).or_default().insert(*cert);
                if !issued.contains(cert) {
                    a.integrity_violations += 1;
                }
                if bogus.contains(cert) {
                    a.bogus_delivered += 1;
                }
                if let Some(sent) = honest.get(cert) {
                    a.delivered_pairs += 1;
                    a.latencies.push(t - sent);
                }
            }
            TraceRecord::Supply { asset, total, .. } => {
                a.supply_points += 1;
                let first = *first_supply.entry(asset.clone()).or_insert(*total);
                if first != *total {
                    a.supply_violations += 1;
                }
            }
            TraceRecord::Summary(s) => {
                a.correct = s.correct;
                a.gate_drops = s.gate_drops;
                a.honest_submissions = s.honest_submissions;
                a.pending_high_water = s.pending_high_water;
                a.pending_collected = s.pending_collected;
                a.monotonicity_violations = s.monotonicity_violations;
                let counts: Vec<u64> = s.sent_per_process.values().copied().collect();
                if !counts.is_empty() {
                    a.messages_mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
                    a.messages_max = counts.iter().copied().max().unwrap_or(0);
                }
                a.bogus_echoes = s
                    .echoes_by_payload
                    .iter()
                    .filter(|(d, _)| bogus_payloads.contains(d))
                    .map(|(_, c)| *c)
                    .sum();
            }
            _ => {}
        }
    }
    a.consistency_violations = slots.values().filter(|c| c.len() > 1).count() as u64;
    a.honest_certificates = honest.len();
    a.all_delivered = a.delivered_pairs == a.correct * a.honest_certificates;
    let sets: Vec<_> = accepted.values().collect();
    a.converged = if accepted.len() == a.correct {
        sets.windows(2).all(|w| w[0] == w[1])
    } else {
        sets.iter().all(|s| s.is_empty())
    };
    a.latencies.sort_by(f64::total_cmp);
    a
}
