use std::collections::BTreeSet;

use crate::prb::{Action, GossipConfig, PrbError, PrbMessage, PrbProcess, ProcessId, SampleConfig};

use super::{CertValidator, CertificateMessage, Delivery, ProcessLedger, Rejection};

/// What handling one event produced.
#[derive(Debug, Clone, Default)]
pub struct ProcessOutput {
    pub sends: Vec<(ProcessId, PrbMessage<CertificateMessage>, u64)>,
    pub prb_delivered: Vec<CertificateMessage>,
    pub delivered: Vec<Delivery>,
}

/// A correct TCE process: PRB reactor plus WCPRB ledger.
#[derive(Debug, Clone)]
pub struct TceProcess {
    prb: PrbProcess<CertificateMessage>,
    ledger: ProcessLedger,
}

impl TceProcess {
    /// Returns the process and its subscription messages.
    pub fn new(
        id: ProcessId,
        registry: &BTreeSet<ProcessId>,
        samples: SampleConfig,
        gossip: GossipConfig,
        ledger: ProcessLedger,
        rng: rand_chacha::ChaCha20Rng,
    ) -> Result<(Self, ProcessOutput), PrbError> {
        let (prb, actions) = PrbProcess::new(id, registry, samples, gossip, rng)?;
        let mut process = Self { prb, ledger };
        let out = process.absorb(actions, 0, &crate::wcprb::DirectValidator);
        Ok((process, out))
    }

    pub fn id(&self) -> ProcessId {
        self.prb.id()
    }

    pub fn prb(&self) -> &PrbProcess<CertificateMessage> {
        &self.prb
    }

    pub fn ledger(&self) -> &ProcessLedger {
        &self.ledger
    }

    /// Whether PRB may act on a gossiped payload: registered subnet, good
    /// signature and, with `validate_at_prb`, a valid certificate.
    pub fn authentic<V: CertValidator + ?Sized>(&self, m: &CertificateMessage, v: &V) -> bool {
        gossip_ok(&self.ledger, m, v)
    }

    pub fn on_message<V: CertValidator + ?Sized>(
        &mut self,
        from: ProcessId,
        msg: PrbMessage<CertificateMessage>,
        now: u64,
        v: &V,
    ) -> ProcessOutput {
        let ledger = &self.ledger;
        let actions = self.prb.on_message(from, msg, |m| gossip_ok(ledger, m, v));
        self.absorb(actions, now, v)
    }

    /// `submit(m)` at the subnet's designated process.
    pub fn submit<V: CertValidator + ?Sized>(
        &mut self,
        m: CertificateMessage,
        now: u64,
        v: &V,
    ) -> Result<ProcessOutput, Rejection> {
        let m = self.ledger.submit(m, v)?;
        let actions = self.prb.broadcast(m);
        Ok(self.absorb(actions, now, v))
    }

    pub fn collect_garbage(&mut self, now: u64) -> usize {
        self.ledger.collect_garbage(now)
    }

    fn absorb<V: CertValidator + ?Sized>(
        &mut self,
        actions: Vec<Action<CertificateMessage>>,
        now: u64,
        v: &V,
    ) -> ProcessOutput {
        let mut out = ProcessOutput::default();
        for a in actions {
            match a {
                Action::Send { to, msg, delay } => out.sends.push((to, msg, delay)),
                Action::Deliver(m) => {
                    out.delivered.extend(self.ledger.on_prb_deliver(m.clone(), now, v));
                    out.prb_delivered.push(m);
                }
            }
        }
        out
    }
}

fn gossip_ok<V: CertValidator + ?Sized>(ledger: &ProcessLedger, m: &CertificateMessage, v: &V) -> bool {
    let cert = m.cert();
    ledger.is_registered(&cert.subnet())
        && v.signature_ok(cert)
        && (!ledger.config().validate_at_prb || v.intrinsic_ok(cert))
}
