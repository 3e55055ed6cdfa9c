use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use crate::certificate::{Digest, StateCommitment, SubnetId};

use super::{CertRef, CertValidator, CertificateMessage, Rejection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LedgerConfig {
    /// `Valid_cert` runs inside PRB's gossip check, so the pending loop only
    /// evaluates `Valid′`.
    pub validate_at_prb: bool,
    /// Pending entries older than this many ticks are dropped.
    pub pending_horizon: Option<u64>,
    /// Re-evaluates the predicate for every delivered message after each
    /// delivery and counts those that turned false.
    pub audit_monotonicity: bool,
}

#[derive(Debug, Clone)]
pub struct Delivery {
    pub message: CertificateMessage,
    /// Pending-set size right after the delivery.
    pub pending: usize,
}

#[derive(Debug, Clone)]
struct PendingEntry {
    message: CertificateMessage,
    since: u64,
}

/// Per-process WCPRB state: accepted history, outstanding deps and the
/// pending set.
#[derive(Debug, Clone)]
pub struct ProcessLedger {
    subnet: Option<SubnetId>,
    config: LedgerConfig,
    genesis: Arc<BTreeMap<SubnetId, StateCommitment>>,
    chains: BTreeMap<SubnetId, Vec<CertRef>>,
    accepted: HashSet<Digest>,
    deps: BTreeMap<Digest, CertRef>,
    pending: Vec<PendingEntry>,
    seen: HashSet<Digest>,
    delivered: Vec<CertificateMessage>,
    pending_high_water: usize,
    collected: u64,
    monotonicity_violations: u64,
}

impl ProcessLedger {
    pub fn new(
        subnet: Option<SubnetId>,
        genesis: Arc<BTreeMap<SubnetId, StateCommitment>>,
        config: LedgerConfig,
    ) -> Self {
        Self {
            subnet,
            config,
            genesis,
            chains: BTreeMap::new(),
            accepted: HashSet::new(),
            deps: BTreeMap::new(),
            pending: Vec::new(),
            seen: HashSet::new(),
            delivered: Vec::new(),
            pending_high_water: 0,
            collected: 0,
            monotonicity_violations: 0,
        }
    }

    pub fn subnet(&self) -> Option<SubnetId> {
        self.subnet
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    pub fn is_registered(&self, subnet: &SubnetId) -> bool {
        self.genesis.contains_key(subnet)
    }

    /// Accepted certificates of `subnet`, in chain order.
    pub fn history(&self, subnet: &SubnetId) -> &[CertRef] {
        self.chains.get(subnet).map_or(&[], Vec::as_slice)
    }

    pub fn histories(&self) -> impl Iterator<Item = (&SubnetId, &[CertRef])> {
        self.chains.iter().map(|(s, c)| (s, c.as_slice()))
    }

    pub fn is_accepted(&self, cert: &Digest) -> bool {
        self.accepted.contains(cert)
    }

    /// Latest accepted state of `subnet`, or its genesis commitment.
    pub fn tip(&self, subnet: &SubnetId) -> Option<StateCommitment> {
        match self.chains.get(subnet).and_then(|c| c.last()) {
            Some(c) => Some(c.cert().state_hash),
            None => self.genesis.get(subnet).copied(),
        }
    }

    pub fn deps(&self) -> Vec<CertRef> {
        self.deps.values().cloned().collect()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn pending_high_water(&self) -> usize {
        self.pending_high_water
    }

    pub fn collected(&self) -> u64 {
        self.collected
    }

    pub fn monotonicity_violations(&self) -> u64 {
        self.monotonicity_violations
    }

    pub fn delivered(&self) -> &[CertificateMessage] {
        &self.delivered
    }

    /// `Valid_deps`.
    pub fn valid_deps(&self, deps: &[CertRef]) -> bool {
        deps.iter().all(|d| self.accepted.contains(&d.digest()))
    }

    /// The certificate extends the latest accepted state of its registered
    /// subnet, or is itself accepted (so the check stays true once passed).
    pub fn linked(&self, cert: &CertRef) -> bool {
        if self.accepted.contains(&cert.digest()) {
            return true;
        }
        self.tip(&cert.subnet()) == Some(cert.cert().prev_state_hash)
    }

    /// `Valid`.
    pub fn valid<V: CertValidator + ?Sized>(&self, m: &CertificateMessage, v: &V) -> bool {
        v.intrinsic_ok(m.cert()) && self.valid_prime(m)
    }

    /// `Valid′`: `Valid` without the stateless certificate check.
    pub fn valid_prime(&self, m: &CertificateMessage) -> bool {
        self.valid_deps(m.deps()) && self.linked(m.cert())
    }

    fn accepts<V: CertValidator + ?Sized>(&self, m: &CertificateMessage, v: &V) -> bool {
        if self.config.validate_at_prb {
            self.valid_prime(m)
        } else {
            self.valid(m, v)
        }
    }

    /// The first failing check of `Valid`, as seen by a submitter.
    pub fn check<V: CertValidator + ?Sized>(&self, m: &CertificateMessage, v: &V) -> Result<(), Rejection> {
        let cert = m.cert();
        if !self.is_registered(&cert.subnet()) {
            Err(Rejection::UnknownSubnet)
        } else if !v.signature_ok(cert) {
            Err(Rejection::BadSignature)
        } else if !v.intrinsic_ok(cert) {
            Err(Rejection::InvalidCertificate)
        } else if !self.linked(cert) || self.accepted.contains(&cert.digest()) {
            Err(Rejection::BrokenLinkage)
        } else if !self.valid_deps(m.deps()) {
            Err(Rejection::MissingDependency)
        } else {
            Ok(())
        }
    }

    /// Source-side validation of a submission. On success `deps_p` is reset
    /// and the message is returned for PRB; on rejection `deps_p` is kept.
    pub fn submit<V: CertValidator + ?Sized>(
        &mut self,
        m: CertificateMessage,
        v: &V,
    ) -> Result<CertificateMessage, Rejection> {
        self.check(&m, v)?;
        self.deps.clear();
        Ok(m)
    }

    /// Adds a PRB-delivered message to the pending set and drains it.
    pub fn on_prb_deliver<V: CertValidator + ?Sized>(
        &mut self,
        m: CertificateMessage,
        now: u64,
        v: &V,
    ) -> Vec<Delivery> {
        use crate::prb::PrbPayload;
        if !self.seen.insert(m.digest()) {
            return Vec::new();
        }
        self.pending.push(PendingEntry { message: m, since: now });
        self.pending_high_water = self.pending_high_water.max(self.pending.len());
        self.drain(v)
    }

    /// Delivers valid pending messages until none is left.
    pub fn drain<V: CertValidator + ?Sized>(&mut self, v: &V) -> Vec<Delivery> {
        let mut out = Vec::new();
        while let Some(pos) = self.pending.iter().position(|e| self.accepts(&e.message, v)) {
            let entry = self.pending.remove(pos);
            self.accept(&entry.message);
            self.delivered.push(entry.message.clone());
            out.push(Delivery {
                message: entry.message,
                pending: self.pending.len(),
            });
        }
        if !out.is_empty() && self.config.audit_monotonicity {
            let broken = self.delivered.iter().filter(|m| !self.accepts(m, v)).count();
            self.monotonicity_violations += broken as u64;
        }
        out
    }

    /// Drops pending entries older than the configured horizon.
    pub fn collect_garbage(&mut self, now: u64) -> usize {
        let Some(horizon) = self.config.pending_horizon else {
            return 0;
        };
        let before = self.pending.len();
        self.pending.retain(|e| now.saturating_sub(e.since) < horizon);
        let dropped = before - self.pending.len();
        self.collected += dropped as u64;
        dropped
    }

    fn accept(&mut self, m: &CertificateMessage) {
        // Deps are already accepted (Valid_deps); filing is a no-op for them
        // but keeps each under its own subnet if the invariant ever breaks.
        for d in m.deps() {
            self.file(d);
        }
        let cert = m.cert();
        self.file(cert);
        if let Some(mine) = self.subnet {
            if cert.cert().targets().contains(&mine) {
                self.deps.insert(cert.digest(), cert.clone());
            }
        }
    }

    fn file(&mut self, cert: &CertRef) {
        if self.accepted.insert(cert.digest()) {
            self.chains.entry(cert.subnet()).or_default().push(cert.clone());
        }
    }
}

/// The TCE state: union of all histories, by certificate digest.
pub fn tce_state<'a>(ledgers: impl IntoIterator<Item = &'a ProcessLedger>) -> BTreeSet<Digest> {
    ledgers
        .into_iter()
        .flat_map(|l| l.chains.values().flatten().map(CertRef::digest))
        .collect()
}
