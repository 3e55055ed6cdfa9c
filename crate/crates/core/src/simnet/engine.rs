use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, LogNormal};
use sha2::{Digest as _, Sha256};

use crate::certificate::{
    apply_stf, batch_root, binding_digest, prepare_certificate, CrossSubnetMessage, Digest,
    SubnetGroup, SubnetId, SubnetState, Transaction, UnsignedCertificate,
};
use crate::ice_frost::{
    run_keygen, run_signing, KeyMaterial, KeygenFault, SessionContext, SigningFault,
    ThresholdParams,
};
use crate::prb::{GossipConfig, PrbMessage, PrbPayload, ProcessId, SampleConfig, SubscribeKind};
use crate::wcprb::{
    CachingValidator, CertRef, CertificateMessage, LedgerConfig, ProcessLedger, ProcessOutput,
    TceProcess,
};

use super::adversary::{Behavior, Malformation, Selection};
use super::registry::{Gate, Registry};
use super::trace::{DropReason, RunSummary, Trace, TraceRecord};
use super::{LatencyModel, SimConfig, SimError, SubnetSpec};

const STREAM_SETUP: u64 = 0;
const STREAM_LATENCY: u64 = 1;
const STREAM_WORKLOAD: u64 = 2;
const STREAM_CRYPTO: u64 = 3;
const STREAM_PROCESS_BASE: u64 = 1 << 32;

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

type Msg = PrbMessage<CertificateMessage>;

enum EventKind {
    Message { from: ProcessId, to: ProcessId, msg: Msg },
    Block { subnet: usize },
    /// Byzantine processes vote for `payload` towards `targets` (or everyone).
    Collude { payload: CertificateMessage, targets: Option<BTreeSet<ProcessId>> },
    /// `from` pushes `payload` straight to every correct process.
    Push { from: ProcessId, payload: CertificateMessage },
    Intrude,
    Collect,
}

struct Event {
    time: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

/// A Byzantine process only keeps track of who listens to it.
#[derive(Debug, Default)]
struct Colluder {
    muted: bool,
    echo_subscribers: BTreeSet<ProcessId>,
    ready_subscribers: BTreeSet<ProcessId>,
}

enum Node {
    Correct(Box<TceProcess>),
    Byzantine(Colluder),
}

struct SubnetActor {
    spec: SubnetSpec,
    id: SubnetId,
    keys: BTreeMap<u32, KeyMaterial<SubnetGroup>>,
    state: SubnetState,
    produced: u32,
    queued: BTreeMap<u32, Vec<Transaction>>,
    signing_faults: BTreeMap<u32, SigningFault>,
    halted: bool,
}

impl SubnetActor {
    fn accounts(&self) -> Vec<(String, String)> {
        self.spec
            .balances
            .iter()
            .map(|b| (b.account.clone(), b.asset.clone()))
            .collect()
    }
}

/// One simulation run. Build with [`Simulation::new`], drive with
/// [`Simulation::run_to_end`].
pub struct Simulation {
    config: SimConfig,
    samples: SampleConfig,
    registry: Registry,
    byzantine: BTreeSet<ProcessId>,
    nodes: Vec<Node>,
    subnets: Vec<SubnetActor>,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    now: u64,
    horizon: u64,
    latency_rng: ChaCha20Rng,
    crypto_rng: ChaCha20Rng,
    validator: CachingValidator,
    trace: Trace,
    summary: RunSummary,
    in_flight: BTreeMap<Digest, (String, u64)>,
    track_supply: bool,
    finished: bool,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let n = config.n;
        let samples = config.samples.resolve(n);
        samples.validate()?;
        let gossip = config.gossip.resolve(n, config.ticks_per_unit);
        let mut setup = stream(config.seed, STREAM_SETUP);

        let byzantine = choose_byzantine(&config, &mut setup)?;
        let mut registry = Registry::new();
        for id in 0..n as ProcessId {
            registry.register_process(id)?;
        }

        let mut trace = Trace::default();
        trace.push(TraceRecord::Start {
            schema_version: config.schema_version,
            seed: config.seed,
            n,
            byzantine: byzantine.iter().copied().collect(),
            sample_size: samples.max_size(),
            thresholds: [samples.echo_threshold, samples.ready_threshold, samples.delivery_threshold],
            validate_at_prb: config.validate_at_prb,
        });

        let mut crypto_rng = stream(config.seed, STREAM_CRYPTO);
        let mut subnets = Vec::new();
        for (i, spec) in config.subnets.iter().enumerate() {
            subnets.push(keygen_subnet(&config, i, spec, &mut crypto_rng, &mut trace)?);
        }
        for s in &subnets {
            registry.register_subnet(s.id, s.state.commitment())?;
            trace.push(TraceRecord::RegisterSubnet {
                subnet: s.spec.name.clone(),
                subnet_id: s.id,
                genesis: s.state.commitment(),
                byzantine: s.spec.byzantine,
            });
        }

        let mut sim = Self {
            horizon: config.to_ticks(config.horizon),
            track_supply: config.subnets.iter().all(|s| !s.byzantine),
            samples,
            registry,
            byzantine,
            nodes: Vec::with_capacity(n),
            subnets,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            latency_rng: stream(config.seed, STREAM_LATENCY),
            crypto_rng,
            validator: CachingValidator::new(),
            trace,
            summary: RunSummary {
                seed: config.seed,
                n,
                ..RunSummary::default()
            },
            in_flight: BTreeMap::new(),
            finished: false,
            config,
        };
        sim.assign_workload();
        sim.spawn_processes(gossip)?;
        sim.schedule_script();
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn samples(&self) -> &SampleConfig {
        &self.samples
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn byzantine(&self) -> &BTreeSet<ProcessId> {
        &self.byzantine
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    /// Correct processes, by id.
    pub fn processes(&self) -> impl Iterator<Item = &TceProcess> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Correct(p) => Some(p.as_ref()),
            Node::Byzantine(_) => None,
        })
    }

    pub fn process(&self, id: ProcessId) -> Option<&TceProcess> {
        match self.nodes.get(id as usize) {
            Some(Node::Correct(p)) => Some(p),
            _ => None,
        }
    }

    pub fn subnet_id(&self, index: usize) -> Option<SubnetId> {
        self.subnets.get(index).map(|s| s.id)
    }

    pub fn subnet_state(&self, index: usize) -> Option<&SubnetState> {
        self.subnets.get(index).map(|s| &s.state)
    }

    pub fn subnet_keys(&self, index: usize) -> Option<&BTreeMap<u32, KeyMaterial<SubnetGroup>>> {
        self.subnets.get(index).map(|s| &s.keys)
    }

    fn units(&self, ticks: u64) -> f64 {
        ticks as f64 / self.config.ticks_per_unit as f64
    }

    fn t(&self) -> f64 {
        self.units(self.now)
    }

    fn schedule(&mut self, at: u64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Reverse(Event {
            time: at,
            seq: self.seq,
            kind,
        }));
    }

    fn spawn_processes(&mut self, gossip: GossipConfig) -> Result<(), SimError> {
        let genesis = Arc::new(self.registry.subnets().clone());
        let ledger_config = LedgerConfig {
            validate_at_prb: self.config.validate_at_prb,
            pending_horizon: self.config.pending_horizon.map(|h| self.config.to_ticks(h)),
            audit_monotonicity: self.config.audit_monotonicity,
        };
        let byzantine = &self.byzantine;
        let muted: BTreeSet<ProcessId> = self
            .config
            .adversary
            .behaviors
            .iter()
            .filter_map(|b| match b {
                Behavior::Mute { processes } => Some(processes),
                _ => None,
            })
            .flat_map(|sel| byzantine.iter().copied().filter(move |p| sel.contains(*p, byzantine)))
            .collect();
        for id in 0..self.config.n as ProcessId {
            if self.byzantine.contains(&id) {
                self.nodes.push(Node::Byzantine(Colluder {
                    muted: muted.contains(&id),
                    ..Colluder::default()
                }));
                continue;
            }
            let subnet = self
                .subnets
                .iter()
                .find(|s| s.spec.members.contains(&id))
                .map(|s| s.id);
            let ledger = ProcessLedger::new(subnet, genesis.clone(), ledger_config);
            let rng = stream(self.config.seed, STREAM_PROCESS_BASE + u64::from(id));
            let (p, out) = TceProcess::new(
                id,
                self.registry.processes(),
                self.samples,
                gossip,
                ledger,
                rng,
            )?;
            self.nodes.push(Node::Correct(Box::new(p)));
            self.emit(id, out);
        }
        Ok(())
    }

    fn assign_workload(&mut self) {
        let w = self.config.workload;
        let mut rng = stream(self.config.seed, STREAM_WORKLOAD);
        let honest: Vec<usize> = (0..self.subnets.len())
            .filter(|i| !self.subnets[*i].spec.byzantine && !self.subnets[*i].spec.balances.is_empty())
            .collect();
        if honest.is_empty() || w.blocks == 0 {
            return;
        }
        for _ in 0..w.transfers {
            let src = honest[rng.random_range(0..honest.len())];
            let block = rng.random_range(0..w.blocks);
            let accounts = self.subnets[src].accounts();
            let (from, asset) = accounts[rng.random_range(0..accounts.len())].clone();
            let amount = rng.random_range(1..=w.max_amount.max(1));
            let others: Vec<usize> = (0..self.subnets.len()).filter(|i| *i != src).collect();
            let tx = if others.is_empty() || rng.random_bool(w.local_fraction.clamp(0.0, 1.0)) {
                let to = accounts[rng.random_range(0..accounts.len())].0.clone();
                Transaction::LocalTransfer {
                    from,
                    to,
                    asset_id: asset,
                    amount,
                }
            } else {
                let dst = others[rng.random_range(0..others.len())];
                let dst_accounts = self.subnets[dst].accounts();
                let recipient = if dst_accounts.is_empty() {
                    "sink".to_string()
                } else {
                    dst_accounts[rng.random_range(0..dst_accounts.len())].0.clone()
                };
                Transaction::OutboundXS {
                    from,
                    message: CrossSubnetMessage::TransferAsset {
                        target_subnet: self.subnets[dst].id,
                        asset_id: asset,
                        recipient,
                        amount,
                    },
                }
            };
            self.subnets[src].queued.entry(block).or_default().push(tx);
        }
    }

    fn schedule_script(&mut self) {
        let start = self.config.to_ticks(self.config.workload.start);
        for i in 0..self.subnets.len() {
            self.schedule(start, EventKind::Block { subnet: i });
        }
        let intrusions: Vec<u64> = self
            .config
            .adversary
            .behaviors
            .iter()
            .filter_map(|b| match b {
                Behavior::Intrude { at } => Some(self.config.to_ticks(*at)),
                _ => None,
            })
            .collect();
        for at in intrusions {
            self.schedule(at, EventKind::Intrude);
        }
        if let Some(h) = self.config.pending_horizon {
            let every = (self.config.to_ticks(h) / 2).max(1);
            self.schedule(every, EventKind::Collect);
        }
    }

    fn latency(&mut self, from: ProcessId, to: ProcessId) -> u64 {
        let units = match self.config.latency {
            LatencyModel::LogNormal { median, sigma } => LogNormal::new(median.ln(), sigma)
                .expect("validated latency parameters")
                .sample(&mut self.latency_rng),
            LatencyModel::Uniform { min, max } => {
                if min == max {
                    min
                } else {
                    self.latency_rng.random_range(min..max)
                }
            }
            LatencyModel::Constant { value } => value,
        };
        let mut units = units;
        for b in &self.config.adversary.behaviors {
            if let Behavior::Delay { processes, factor, extra } = b {
                if processes.contains(from, &self.byzantine) || processes.contains(to, &self.byzantine) {
                    units = units * factor + extra;
                }
            }
        }
        self.config.to_ticks(units).max(1)
    }

    fn send(&mut self, from: ProcessId, to: ProcessId, msg: Msg, delay: u64) {
        let correct = matches!(self.nodes.get(from as usize), Some(Node::Correct(_)));
        if correct {
            let kind = msg.kind();
            *self.summary.sent_by_kind.entry(kind.to_string()).or_default() += 1;
            if !matches!(msg, PrbMessage::Subscribe(_)) {
                *self.summary.sent_per_process.entry(from).or_default() += 1;
            }
            if let PrbMessage::Echo { digest, .. } = &msg {
                *self.summary.echoes_by_payload.entry(*digest).or_default() += 1;
            }
        }
        if self.config.record_messages {
            let digest = match &msg {
                PrbMessage::Subscribe(_) => None,
                PrbMessage::Gossip(p) => Some(p.digest()),
                PrbMessage::Echo { digest, .. } | PrbMessage::Ready { digest, .. } => Some(*digest),
            };
            self.trace.push(TraceRecord::Send {
                t: self.units(self.now + delay),
                from,
                to,
                kind: msg.kind().to_string(),
                digest,
            });
        }
        let at = self.now + delay + self.latency(from, to);
        self.schedule(at, EventKind::Message { from, to, msg });
    }

    fn emit(&mut self, id: ProcessId, out: ProcessOutput) {
        let t = self.t();
        for m in &out.prb_delivered {
            self.trace.push(TraceRecord::PrbDeliver {
                t,
                process: id,
                cert: m.cert().digest(),
                subnet_id: m.cert().subnet(),
                height: m.cert().cert().height(),
            });
        }
        for d in &out.delivered {
            let c = d.message.cert();
            self.trace.push(TraceRecord::WcprbDeliver {
                t,
                process: id,
                cert: c.digest(),
                subnet_id: c.subnet(),
                height: c.cert().height(),
                prev: c.cert().prev_state_hash,
                state: c.cert().state_hash,
                deps: d.message.deps().iter().map(CertRef::digest).collect(),
                pending: d.pending,
            });
        }
        for (to, msg, delay) in out.sends {
            self.send(id, to, msg, delay);
        }
    }

    /// Processes events until the queue drains or the horizon passes, then
    /// appends the summary record.
    pub fn run_to_end(&mut self) {
        if self.finished {
            return;
        }
        let mut quiescent = true;
        while let Some(Reverse(ev)) = self.queue.pop() {
            if ev.time > self.horizon {
                quiescent = false;
                break;
            }
            self.now = ev.time;
            self.summary.events += 1;
            self.handle(ev.kind);
        }
        self.finish(quiescent);
    }

    fn finish(&mut self, quiescent: bool) {
        self.finished = true;
        let mut s = std::mem::take(&mut self.summary);
        s.quiescent = quiescent;
        s.end_time = self.t();
        s.correct = self.config.n - self.byzantine.len();
        for p in self.processes() {
            let l = p.ledger();
            s.pending_high_water = s.pending_high_water.max(l.pending_high_water());
            s.pending_collected += l.collected();
            s.monotonicity_violations += l.monotonicity_violations();
            s.sent_per_process.entry(p.id()).or_default();
        }
        self.trace.push(TraceRecord::Summary(s));
    }

    fn handle(&mut self, kind: EventKind) {
        match kind {
            EventKind::Message { from, to, msg } => self.deliver(from, to, msg),
            EventKind::Block { subnet } => self.produce_block(subnet),
            EventKind::Collude { payload, targets } => self.collude(&payload, targets.as_ref()),
            EventKind::Push { from, payload } => self.push_to_all(from, &payload),
            EventKind::Intrude => self.intrude(),
            EventKind::Collect => self.collect(),
        }
    }

    fn deliver(&mut self, from: ProcessId, to: ProcessId, msg: Msg) {
        let gate = self.registry.gate(from);
        let now = self.now;
        let out = match self.nodes.get_mut(to as usize) {
            None => return,
            Some(Node::Byzantine(c)) => {
                if let PrbMessage::Subscribe(kind) = msg {
                    match kind {
                        SubscribeKind::Echo => c.echo_subscribers.insert(from),
                        SubscribeKind::Ready | SubscribeKind::Delivery => c.ready_subscribers.insert(from),
                    };
                }
                return;
            }
            Some(Node::Correct(p)) => {
                if gate == Gate::Drop {
                    self.summary.gate_drops += 1;
                    let t = self.t();
                    self.trace.push(TraceRecord::Drop {
                        t,
                        from,
                        to,
                        reason: DropReason::UnregisteredSender,
                    });
                    return;
                }
                p.on_message(from, msg, now, &self.validator)
            }
        };
        self.emit(to, out);
    }

    fn collect(&mut self) {
        let now = self.now;
        let t = self.t();
        let mut records = Vec::new();
        for node in &mut self.nodes {
            if let Node::Correct(p) = node {
                let dropped = p.collect_garbage(now);
                if dropped > 0 {
                    records.push(TraceRecord::PendingGc {
                        t,
                        process: p.id(),
                        dropped,
                    });
                }
            }
        }
        for r in records {
            self.trace.push(r);
        }
        if !self.queue.is_empty() {
            let every = (self.config.to_ticks(self.config.pending_horizon.unwrap_or(1.0)) / 2).max(1);
            self.schedule(now + every, EventKind::Collect);
        }
    }

    fn behavior_at(&self, subnet: usize, slot: u64) -> Option<Behavior> {
        self.config.adversary.behaviors.iter().find_map(|b| match b {
            Behavior::Equivocate { subnet: s, slot: k, .. } | Behavior::BogusCert { subnet: s, slot: k, .. }
                if *s == subnet && *k == slot =>
            {
                Some(b.clone())
            }
            _ => None,
        })
    }

    fn produce_block(&mut self, index: usize) {
        let actor = &self.subnets[index];
        if actor.halted || actor.produced >= self.config.workload.blocks {
            return;
        }
        let interval = self.config.to_ticks(self.config.workload.block_interval).max(1);
        if actor.spec.byzantine {
            let slot = u64::from(actor.produced) + 1;
            match self.behavior_at(index, slot) {
                Some(Behavior::Equivocate { second_after, .. }) => self.equivocate(index, second_after),
                Some(Behavior::BogusCert { malformation, .. }) => self.bogus(index, malformation),
                _ => self.byzantine_block(index),
            }
        } else {
            let submitter = actor.spec.submitter;
            let tip = self.process(submitter).and_then(|p| p.ledger().tip(&self.subnets[index].id));
            if tip != Some(self.subnets[index].state.commitment()) {
                // The previous certificate is not yet accepted at the submitter.
                self.schedule(self.now + (interval / 4).max(1), EventKind::Block { subnet: index });
                return;
            }
            self.honest_block(index);
        }
        if !self.subnets[index].halted {
            self.schedule(self.now + interval, EventKind::Block { subnet: index });
        }
    }

    fn sign(&mut self, index: usize, unsigned: UnsignedCertificate) -> Option<CertRef> {
        let actor = &self.subnets[index];
        let signers: BTreeSet<u32> = actor.keys.keys().copied().collect();
        let payload = unsigned.signing_payload();
        let outcome = run_signing(&actor.keys, &signers, &payload, &actor.signing_faults, &mut self.crypto_rng);
        let t = self.t();
        match outcome {
            Ok(o) => {
                self.trace.push(TraceRecord::Signing {
                    t,
                    subnet_id: actor.id,
                    excluded: o.excluded.iter().copied().collect(),
                    attempts: o.attempts,
                });
                Some(CertRef::new(unsigned.with_signature(o.signature)))
            }
            Err(_) => {
                self.trace.push(TraceRecord::Signing {
                    t,
                    subnet_id: actor.id,
                    excluded: signers.into_iter().collect(),
                    attempts: 0,
                });
                None
            }
        }
    }

    fn honest_block(&mut self, index: usize) {
        let submitter = self.subnets[index].spec.submitter;
        let Some(deps) = self.process(submitter).map(|p| p.ledger().deps()) else {
            return;
        };
        let actor = &self.subnets[index];
        let mut candidates = Vec::new();
        for dep in &deps {
            for (i, m) in dep.cert().xs_list.iter().enumerate() {
                if let CrossSubnetMessage::TransferAsset {
                    target_subnet,
                    asset_id,
                    recipient,
                    amount,
                } = m
                {
                    let digest = dep.cert().xs_message_id(i);
                    if *target_subnet == actor.id && !actor.state.has_received(&digest) {
                        candidates.push(Transaction::InboundMint {
                            digest,
                            recipient: recipient.clone(),
                            asset_id: asset_id.clone(),
                            amount: *amount,
                        });
                    }
                }
            }
        }
        if let Some(txs) = actor.queued.get(&actor.produced) {
            candidates.extend(txs.iter().cloned());
        }
        // Keep the transactions that apply in sequence; drop the rest.
        let mut running = actor.state.clone();
        let mut batch = Vec::new();
        for tx in candidates {
            if let Ok(next) = apply_stf(&running, std::slice::from_ref(&tx)) {
                running = next;
                batch.push(tx);
            }
        }
        let Ok((unsigned, next)) = prepare_certificate(actor.id, &actor.state, &batch) else {
            return;
        };
        let Some(cert) = self.sign(index, unsigned) else {
            self.subnets[index].halted = true;
            return;
        };
        let message = CertificateMessage::new(cert.clone(), deps);
        let now = self.now;
        let t = self.t();
        let Some(Node::Correct(p)) = self.nodes.get_mut(submitter as usize) else {
            return;
        };
        match p.submit(message.clone(), now, &self.validator) {
            Ok(out) => {
                self.summary.honest_submissions += 1;
                self.trace.push(TraceRecord::Submit {
                    t,
                    process: submitter,
                    subnet_id: cert.subnet(),
                    cert: cert.digest(),
                    height: cert.cert().height(),
                    prev: cert.cert().prev_state_hash,
                    state: cert.cert().state_hash,
                    deps: message.dep_digests().into_iter().collect(),
                    honest: true,
                });
                self.commit(index, &cert, &batch, next);
                self.emit(submitter, out);
            }
            Err(reason) => self.trace.push(TraceRecord::Reject {
                t,
                process: submitter,
                subnet_id: cert.subnet(),
                cert: cert.digest(),
                reason,
            }),
        }
    }

    fn commit(&mut self, index: usize, cert: &CertRef, batch: &[Transaction], next: SubnetState) {
        for (i, m) in cert.cert().xs_list.iter().enumerate() {
            if let CrossSubnetMessage::TransferAsset { asset_id, amount, .. } = m {
                self.in_flight
                    .insert(cert.cert().xs_message_id(i), (asset_id.clone(), *amount));
            }
        }
        for tx in batch {
            if let Transaction::InboundMint { digest, .. } = tx {
                self.in_flight.remove(digest);
            }
        }
        let actor = &mut self.subnets[index];
        actor.state = next;
        actor.produced += 1;
        if self.track_supply {
            self.record_supply();
        }
    }

    fn record_supply(&mut self) {
        let t = self.t();
        let assets: BTreeSet<String> = self.subnets.iter().flat_map(|s| s.state.assets()).collect();
        for asset in assets {
            let held: u128 = self.subnets.iter().map(|s| s.state.supply(&asset)).sum();
            let in_flight: u128 = self
                .in_flight
                .values()
                .filter(|(a, _)| *a == asset)
                .map(|(_, v)| u128::from(*v))
                .sum();
            self.trace.push(TraceRecord::Supply {
                t,
                asset,
                total: held + in_flight,
                in_flight,
            });
        }
    }

    fn build_signed(&mut self, index: usize, txs: &[Transaction]) -> Option<(CertRef, SubnetState)> {
        let actor = &self.subnets[index];
        let (unsigned, next) = prepare_certificate(actor.id, &actor.state, txs).ok()?;
        Some((self.sign(index, unsigned)?, next))
    }

    fn byzantine_block(&mut self, index: usize) {
        let Some((cert, next)) = self.build_signed(index, &[]) else {
            self.subnets[index].halted = true;
            return;
        };
        let submitter = self.subnets[index].spec.submitter;
        self.trace.push(TraceRecord::Submit {
            t: self.t(),
            process: submitter,
            subnet_id: cert.subnet(),
            cert: cert.digest(),
            height: cert.cert().height(),
            prev: cert.cert().prev_state_hash,
            state: cert.cert().state_hash,
            deps: Vec::new(),
            honest: false,
        });
        self.commit(index, &cert, &[], next);
        self.push_to_all(submitter, &CertificateMessage::new(cert, []));
    }

    fn muted(&self, id: ProcessId) -> bool {
        matches!(self.nodes.get(id as usize), Some(Node::Byzantine(c)) if c.muted)
    }

    fn push_to_all(&mut self, from: ProcessId, payload: &CertificateMessage) {
        if self.muted(from) {
            return;
        }
        let targets: Vec<ProcessId> = (0..self.config.n as ProcessId)
            .filter(|p| *p != from && !self.byzantine.contains(p))
            .collect();
        for to in targets {
            self.send(from, to, PrbMessage::Gossip(payload.clone()), 0);
        }
    }

    /// Every unmuted Byzantine process sends Echo and Ready for `payload`
    /// to those of its subscribers in `targets`.
    fn collude(&mut self, payload: &CertificateMessage, targets: Option<&BTreeSet<ProcessId>>) {
        let instance = payload.instance();
        let digest = payload.digest();
        let mut sends = Vec::new();
        for (id, node) in self.nodes.iter().enumerate() {
            let Node::Byzantine(c) = node else { continue };
            if c.muted {
                continue;
            }
            let wanted = |p: &ProcessId| targets.is_none_or(|t| t.contains(p));
            for to in c.echo_subscribers.iter().filter(|p| wanted(p)) {
                sends.push((id as ProcessId, *to, PrbMessage::Echo { instance, digest }));
            }
            for to in c.ready_subscribers.iter().filter(|p| wanted(p)) {
                sends.push((id as ProcessId, *to, PrbMessage::Ready { instance, digest }));
            }
        }
        for (from, to, msg) in sends {
            self.send(from, to, msg, 0);
        }
    }

    fn double_spend_batches(&self, index: usize) -> [Vec<Transaction>; 2] {
        let actor = &self.subnets[index];
        let Some((from, asset)) = actor.accounts().into_iter().next() else {
            return [Vec::new(), Vec::new()];
        };
        let amount = actor.state.balance(&from, &asset);
        let others: Vec<&SubnetActor> = self.subnets.iter().filter(|s| s.id != actor.id).collect();
        if amount == 0 || others.is_empty() {
            return [Vec::new(), Vec::new()];
        }
        let spend = |to: &SubnetActor, recipient: &str| {
            vec![Transaction::OutboundXS {
                from: from.clone(),
                message: CrossSubnetMessage::TransferAsset {
                    target_subnet: to.id,
                    asset_id: asset.clone(),
                    recipient: recipient.to_string(),
                    amount,
                },
            }]
        };
        let first = others[0];
        let second = others.get(1).copied().unwrap_or(first);
        [spend(first, "payee-a"), spend(second, "payee-b")]
    }

    fn equivocate(&mut self, index: usize, second_after: Option<f64>) {
        self.subnets[index].halted = true;
        let [a, b] = self.double_spend_batches(index);
        let (Some((ca, _)), Some((cb, _))) = (self.build_signed(index, &a), self.build_signed(index, &b)) else {
            return;
        };
        let submitter = self.subnets[index].spec.submitter;
        self.trace.push(TraceRecord::Equivocate {
            t: self.t(),
            subnet_id: ca.subnet(),
            prev: ca.cert().prev_state_hash,
            certs: [ca.digest(), cb.digest()],
        });
        let ma = CertificateMessage::new(ca, []);
        let mb = CertificateMessage::new(cb, []);
        match second_after {
            None => {
                let half = (self.config.n / 2) as ProcessId;
                let low: BTreeSet<ProcessId> = (0..half).collect();
                let high: BTreeSet<ProcessId> = (half..self.config.n as ProcessId).collect();
                if !self.muted(submitter) {
                    for (set, m) in [(&low, &ma), (&high, &mb)] {
                        for to in set.iter().filter(|p| !self.byzantine.contains(p) && **p != submitter).copied().collect::<Vec<_>>() {
                            self.send(submitter, to, PrbMessage::Gossip(m.clone()), 0);
                        }
                    }
                }
                self.collude(&ma, Some(&low));
                self.collude(&mb, Some(&high));
            }
            Some(after) => {
                self.push_to_all(submitter, &ma);
                self.collude(&ma, None);
                let at = self.now + self.config.to_ticks(after);
                self.schedule(at, EventKind::Push { from: submitter, payload: mb.clone() });
                self.schedule(at, EventKind::Collude { payload: mb, targets: None });
            }
        }
    }

    fn bogus(&mut self, index: usize, malformation: Malformation) {
        self.subnets[index].halted = true;
        let actor = &self.subnets[index];
        let fake = Digest(Sha256::digest(b"tce-made-up-state").into());
        let funded = actor
            .accounts()
            .into_iter()
            .next()
            .filter(|(a, s)| actor.state.balance(a, s) > 0);
        let other = self.subnets.iter().find(|s| s.id != actor.id).map(|s| s.id);
        let unsigned = match (malformation, funded, other) {
            (Malformation::HiddenMessage, Some((from, asset)), Some(target)) => {
                let tx = Transaction::OutboundXS {
                    from,
                    message: CrossSubnetMessage::TransferAsset {
                        target_subnet: target,
                        asset_id: asset,
                        recipient: "ghost".into(),
                        amount: 1,
                    },
                };
                prepare_certificate(actor.id, &actor.state, &[tx]).ok().map(|(mut u, _)| {
                    u.xs_list.pop();
                    u.proof_xs_list.pop();
                    u
                })
            }
            (Malformation::Overspend, Some((from, asset)), _) => {
                prepare_certificate(actor.id, &actor.state, &[]).ok().map(|(mut u, _)| {
                    u.proof.tx_batch = vec![Transaction::LocalTransfer {
                        amount: actor.state.balance(&from, &asset) + 1,
                        from,
                        to: "accomplice".into(),
                        asset_id: asset,
                    }];
                    u.proof.batch_root = batch_root(&u.proof.tx_batch);
                    u.state_hash = fake;
                    u.proof.binding = binding_digest(&u.prev_state_hash, &fake, &u.proof.batch_root);
                    u
                })
            }
            _ => prepare_certificate(actor.id, &actor.state, &[]).ok().map(|(mut u, _)| {
                u.state_hash = fake;
                u
            }),
        };
        let Some(unsigned) = unsigned else { return };
        let Some(cert) = self.sign(index, unsigned) else { return };
        let payload = CertificateMessage::new(cert, []);
        self.trace.push(TraceRecord::Bogus {
            t: self.t(),
            subnet_id: payload.cert().subnet(),
            cert: payload.cert().digest(),
            payload: payload.digest(),
            malformation: format!("{malformation:?}"),
        });
        let submitter = self.subnets[index].spec.submitter;
        self.push_to_all(submitter, &payload);
    }

    fn intrude(&mut self) {
        let params = ThresholdParams::new(1, 1).expect("1-of-1 is valid");
        let ctx = SessionContext::new(u64::MAX, 0, b"intruder".to_vec());
        let Ok(out) = run_keygen::<SubnetGroup, _>(params, ctx, &BTreeMap::new(), &mut self.crypto_rng) else {
            return;
        };
        let id = SubnetId::from_group_key(&out.public.group_key);
        let Ok((unsigned, _)) = prepare_certificate(id, &SubnetState::new(), &[]) else {
            return;
        };
        let Ok(cert) = unsigned.sign(&out.keys, &[1].into(), &mut self.crypto_rng) else {
            return;
        };
        let payload = CertificateMessage::new(CertRef::new(cert), []);
        let intruder = self.config.n as ProcessId;
        for to in 0..self.config.n as ProcessId {
            let at = self.now + self.latency(intruder, to);
            self.schedule(at, EventKind::Message {
                from: intruder,
                to,
                msg: PrbMessage::Gossip(payload.clone()),
            });
        }
    }
}

fn choose_byzantine(config: &SimConfig, rng: &mut ChaCha20Rng) -> Result<BTreeSet<ProcessId>, SimError> {
    let count = config.byzantine_count();
    let mut chosen: BTreeSet<ProcessId> = config
        .subnets
        .iter()
        .filter(|s| s.byzantine)
        .map(|s| s.submitter)
        .collect();
    for b in &config.adversary.behaviors {
        if let Behavior::Mute {
            processes: Selection::Processes(ids),
        } = b
        {
            chosen.extend(ids.iter().copied());
        }
    }
    if chosen.len() > count {
        return Err(SimError::InvalidConfig(format!(
            "{} processes must be byzantine but byzantine_fraction allows {count}",
            chosen.len()
        )));
    }
    let honest_submitters: BTreeSet<ProcessId> = config
        .subnets
        .iter()
        .filter(|s| !s.byzantine)
        .map(|s| s.submitter)
        .collect();
    if !chosen.is_disjoint(&honest_submitters) {
        return Err(SimError::InvalidConfig("an honest subnet's submitter is byzantine".into()));
    }
    let pool: Vec<ProcessId> = (0..config.n as ProcessId)
        .filter(|p| !chosen.contains(p) && !honest_submitters.contains(p))
        .collect();
    let extra = (count - chosen.len()).min(pool.len());
    chosen.extend(index::sample(rng, pool.len(), extra).into_iter().map(|i| pool[i]));
    Ok(chosen)
}

fn keygen_subnet(
    config: &SimConfig,
    index: usize,
    spec: &SubnetSpec,
    rng: &mut ChaCha20Rng,
    trace: &mut Trace,
) -> Result<SubnetActor, SimError> {
    let participants = spec.members.len() as u32;
    let params = ThresholdParams::new(spec.threshold, participants)?;
    let ctx = SessionContext::new(index as u64, 0, spec.name.as_bytes().to_vec());
    let mut keygen_faults = BTreeMap::new();
    let mut signing_faults = BTreeMap::new();
    for b in &config.adversary.behaviors {
        match b {
            Behavior::BadShare { subnet, dealer, victim } if *subnet == index => {
                keygen_faults.insert(*dealer, KeygenFault::BadShare(*victim));
            }
            Behavior::BadResponse { subnet, signer } if *subnet == index => {
                signing_faults.insert(*signer, SigningFault::BadResponse);
            }
            _ => {}
        }
    }
    let out = run_keygen::<SubnetGroup, _>(params, ctx, &keygen_faults, rng)?;
    let id = SubnetId::from_group_key(&out.public.group_key);
    trace.push(TraceRecord::Keygen {
        subnet: spec.name.clone(),
        subnet_id: id,
        participants,
        threshold: spec.threshold,
        excluded: out.excluded.iter().copied().collect(),
        verdicts: out
            .verdicts
            .iter()
            .map(|v| format!("{}:{:?}", v.excluded, v.reason))
            .collect(),
    });
    let state = SubnetState::with_balances(
        spec.balances
            .iter()
            .map(|b| (b.account.as_str(), b.asset.as_str(), b.amount)),
    );
    Ok(SubnetActor {
        spec: spec.clone(),
        id,
        keys: out.keys,
        state,
        produced: 0,
        queued: BTreeMap::new(),
        signing_faults,
        halted: false,
    })
}

/// Runs `config` to completion and returns its trace.
pub fn run(config: SimConfig) -> Result<Trace, SimError> {
    let mut sim = Simulation::new(config)?;
    sim.run_to_end();
    Ok(sim.into_trace())
}
