//! Sample-based probabilistic reliable broadcast.
//!
//! Each process listens to three small random samples of peers instead of
//! quorums. A payload first spreads by push gossip; a process that sees a
//! correctly signed payload for an instance for the first time sends an Echo
//! to its Echo subscribers, sends Ready once enough Echo (or Ready) messages
//! for the same digest arrived from its samples, and delivers once more than
//! `D` Ready messages arrived from its Delivery sample.
//!
//! [`PrbProcess`] is a pure reactor: it consumes one message at a time and
//! returns the [`Action`]s to perform. Transport, timing and authenticity of
//! payloads are supplied by the caller.

mod samples;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Debug;

use rand::seq::index;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::certificate::Digest;

pub use samples::{init_samples, ProcessSamples, SampleConfig};

pub type ProcessId = u32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PrbError {
    #[error("registry has {peers} peers, samples need {needed}")]
    RegistryTooSmall { peers: usize, needed: usize },
    #[error("thresholds must be positive and below their sample sizes: {0:?}")]
    InvalidThresholds(SampleConfig),
}

/// Something PRB can broadcast.
pub trait PrbPayload: Clone + Debug {
    type Instance: Ord + Clone + Debug;

    fn instance(&self) -> Self::Instance;

    fn digest(&self) -> Digest;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubscribeKind {
    Echo,
    Ready,
    Delivery,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PrbMessage<P: PrbPayload> {
    Subscribe(SubscribeKind),
    Gossip(P),
    Echo { instance: P::Instance, digest: Digest },
    Ready { instance: P::Instance, digest: Digest },
}

impl<P: PrbPayload> PrbMessage<P> {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Subscribe(_) => "subscribe",
            Self::Gossip(_) => "gossip",
            Self::Echo { .. } => "echo",
            Self::Ready { .. } => "ready",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action<P: PrbPayload> {
    /// Send `msg` to `to`, `delay` event-time ticks from now (on top of the
    /// network latency).
    Send {
        to: ProcessId,
        msg: PrbMessage<P>,
        delay: u64,
    },
    Deliver(P),
}

/// Push-gossip parameters of the underlying unreliable broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GossipConfig {
    pub fanout: usize,
    /// Forward waves per first receipt.
    pub rounds: usize,
    /// Spacing between waves, in event-time ticks.
    pub wave_spacing: u64,
}

impl GossipConfig {
    /// Fanout `⌈ln n⌉ + 1`, two waves one time unit apart.
    pub fn for_network(n: usize, ticks_per_unit: u64) -> Self {
        Self {
            fanout: (n as f64).ln().ceil() as usize + 1,
            rounds: 2,
            wave_spacing: ticks_per_unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceState<P: PrbPayload> {
    pub candidates: BTreeMap<Digest, P>,
    pub echoes: BTreeMap<Digest, BTreeSet<ProcessId>>,
    /// Ready senders that belong to the Ready sample.
    pub readies: BTreeMap<Digest, BTreeSet<ProcessId>>,
    /// Ready senders that belong to the Delivery sample.
    pub delivery_readies: BTreeMap<Digest, BTreeSet<ProcessId>>,
    pub echo_sent: Option<Digest>,
    pub ready_sent: Option<Digest>,
    pub delivered: Option<Digest>,
}

impl<P: PrbPayload> Default for InstanceState<P> {
    fn default() -> Self {
        Self {
            candidates: BTreeMap::new(),
            echoes: BTreeMap::new(),
            readies: BTreeMap::new(),
            delivery_readies: BTreeMap::new(),
            echo_sent: None,
            ready_sent: None,
            delivered: None,
        }
    }
}

/// One correct process's broadcast state.
#[derive(Debug, Clone)]
pub struct PrbProcess<P: PrbPayload> {
    id: ProcessId,
    config: SampleConfig,
    gossip: GossipConfig,
    samples: ProcessSamples,
    peers: Vec<ProcessId>,
    echo_subscribers: BTreeSet<ProcessId>,
    ready_subscribers: BTreeSet<ProcessId>,
    instances: BTreeMap<P::Instance, InstanceState<P>>,
    gossip_seen: HashSet<Digest>,
    rng: ChaCha20Rng,
}

impl<P: PrbPayload> PrbProcess<P> {
    /// Draws the samples and returns the subscription messages to send.
    pub fn new(
        id: ProcessId,
        registry: &BTreeSet<ProcessId>,
        config: SampleConfig,
        gossip: GossipConfig,
        mut rng: ChaCha20Rng,
    ) -> Result<(Self, Vec<Action<P>>), PrbError> {
        let samples = init_samples(id, registry, &config, &mut rng)?;
        let subscribe = |set: &BTreeSet<ProcessId>, kind| {
            set.iter()
                .map(move |to| Action::Send {
                    to: *to,
                    msg: PrbMessage::Subscribe(kind),
                    delay: 0,
                })
                .collect::<Vec<_>>()
        };
        let mut actions = subscribe(&samples.echo, SubscribeKind::Echo);
        actions.extend(subscribe(&samples.ready, SubscribeKind::Ready));
        actions.extend(subscribe(&samples.delivery, SubscribeKind::Delivery));
        let process = Self {
            id,
            config,
            gossip,
            samples,
            peers: registry.iter().copied().filter(|p| *p != id).collect(),
            echo_subscribers: BTreeSet::new(),
            ready_subscribers: BTreeSet::new(),
            instances: BTreeMap::new(),
            gossip_seen: HashSet::new(),
            rng,
        };
        Ok((process, actions))
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn samples(&self) -> &ProcessSamples {
        &self.samples
    }

    pub fn config(&self) -> &SampleConfig {
        &self.config
    }

    pub fn echo_subscribers(&self) -> &BTreeSet<ProcessId> {
        &self.echo_subscribers
    }

    pub fn ready_subscribers(&self) -> &BTreeSet<ProcessId> {
        &self.ready_subscribers
    }

    pub fn instance(&self, id: &P::Instance) -> Option<&InstanceState<P>> {
        self.instances.get(id)
    }

    /// Originates `payload`: gossips it and processes it locally, as any
    /// receiver would.
    pub fn broadcast(&mut self, payload: P) -> Vec<Action<P>> {
        self.handle_gossip(payload, true)
    }

    /// Handles one message. `authentic` decides whether a gossiped payload is
    /// correctly signed (and, if configured, well formed).
    pub fn on_message<F>(&mut self, from: ProcessId, msg: PrbMessage<P>, authentic: F) -> Vec<Action<P>>
    where
        F: FnOnce(&P) -> bool,
    {
        match msg {
            PrbMessage::Subscribe(kind) => self.on_subscribe(from, kind),
            PrbMessage::Gossip(payload) => {
                if self.gossip_seen.contains(&payload.digest()) {
                    return Vec::new();
                }
                let ok = authentic(&payload);
                self.handle_gossip(payload, ok)
            }
            PrbMessage::Echo { instance, digest } => self.on_echo(from, instance, digest),
            PrbMessage::Ready { instance, digest } => self.on_ready(from, instance, digest),
        }
    }

    fn on_subscribe(&mut self, from: ProcessId, kind: SubscribeKind) -> Vec<Action<P>> {
        let mut out = Vec::new();
        match kind {
            SubscribeKind::Echo => {
                if self.echo_subscribers.insert(from) {
                    for (inst, st) in &self.instances {
                        if let Some(d) = st.echo_sent {
                            out.push(send(from, PrbMessage::Echo { instance: inst.clone(), digest: d }));
                        }
                    }
                }
            }
            SubscribeKind::Ready | SubscribeKind::Delivery => {
                if self.ready_subscribers.insert(from) {
                    for (inst, st) in &self.instances {
                        if let Some(d) = st.ready_sent {
                            out.push(send(from, PrbMessage::Ready { instance: inst.clone(), digest: d }));
                        }
                    }
                }
            }
        }
        out
    }

    fn handle_gossip(&mut self, payload: P, authentic: bool) -> Vec<Action<P>> {
        let digest = payload.digest();
        if !authentic || !self.gossip_seen.insert(digest) {
            return Vec::new();
        }
        let mut out = self.forward(&payload);
        let instance = payload.instance();
        let st = self.instances.entry(instance.clone()).or_default();
        st.candidates.entry(digest).or_insert(payload);
        if st.echo_sent.is_none() {
            st.echo_sent = Some(digest);
            for to in &self.echo_subscribers {
                out.push(send(*to, PrbMessage::Echo { instance: instance.clone(), digest }));
            }
        }
        // Ready messages may have outrun the payload.
        out.extend(self.check_delivery(&instance));
        out
    }

    fn forward(&mut self, payload: &P) -> Vec<Action<P>> {
        let mut out = Vec::new();
        let fanout = self.gossip.fanout.min(self.peers.len());
        for wave in 0..self.gossip.rounds {
            for i in index::sample(&mut self.rng, self.peers.len(), fanout) {
                out.push(Action::Send {
                    to: self.peers[i],
                    msg: PrbMessage::Gossip(payload.clone()),
                    delay: wave as u64 * self.gossip.wave_spacing,
                });
            }
        }
        out
    }

    fn on_echo(&mut self, from: ProcessId, instance: P::Instance, digest: Digest) -> Vec<Action<P>> {
        if !self.samples.echo.contains(&from) {
            return Vec::new();
        }
        let st = self.instances.entry(instance.clone()).or_default();
        st.echoes.entry(digest).or_default().insert(from);
        self.maybe_ready(&instance, digest)
    }

    fn on_ready(&mut self, from: ProcessId, instance: P::Instance, digest: Digest) -> Vec<Action<P>> {
        let in_ready = self.samples.ready.contains(&from);
        let in_delivery = self.samples.delivery.contains(&from);
        if !in_ready && !in_delivery {
            return Vec::new();
        }
        let st = self.instances.entry(instance.clone()).or_default();
        if in_ready {
            st.readies.entry(digest).or_default().insert(from);
        }
        if in_delivery {
            st.delivery_readies.entry(digest).or_default().insert(from);
        }
        let mut out = self.maybe_ready(&instance, digest);
        out.extend(self.check_delivery(&instance));
        out
    }

    fn maybe_ready(&mut self, instance: &P::Instance, digest: Digest) -> Vec<Action<P>> {
        let Some(st) = self.instances.get_mut(instance) else {
            return Vec::new();
        };
        if st.ready_sent.is_some() {
            return Vec::new();
        }
        let echoes = st.echoes.get(&digest).map_or(0, BTreeSet::len);
        let readies = st.readies.get(&digest).map_or(0, BTreeSet::len);
        if echoes < self.config.echo_threshold && readies < self.config.ready_threshold {
            return Vec::new();
        }
        st.ready_sent = Some(digest);
        self.ready_subscribers
            .iter()
            .map(|to| send(*to, PrbMessage::Ready { instance: instance.clone(), digest }))
            .collect()
    }

    fn check_delivery(&mut self, instance: &P::Instance) -> Vec<Action<P>> {
        let Some(st) = self.instances.get_mut(instance) else {
            return Vec::new();
        };
        if st.delivered.is_some() {
            return Vec::new();
        }
        let ready = st
            .delivery_readies
            .iter()
            .find(|(d, senders)| {
                senders.len() > self.config.delivery_threshold && st.candidates.contains_key(d)
            })
            .map(|(d, _)| *d);
        match ready {
            Some(d) => {
                st.delivered = Some(d);
                vec![Action::Deliver(st.candidates[&d].clone())]
            }
            None => Vec::new(),
        }
    }
}

fn send<P: PrbPayload>(to: ProcessId, msg: PrbMessage<P>) -> Action<P> {
    Action::Send { to, msg, delay: 0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::collections::VecDeque;

    #[derive(Debug, Clone, PartialEq, Eq)]
    struct Note {
        slot: u32,
        body: u8,
    }

    impl PrbPayload for Note {
        type Instance = u32;

        fn instance(&self) -> u32 {
            self.slot
        }

        fn digest(&self) -> Digest {
            let mut d = [0u8; 32];
            d[..4].copy_from_slice(&self.slot.to_be_bytes());
            d[4] = self.body;
            Digest(d)
        }
    }

    fn gossip() -> GossipConfig {
        GossipConfig {
            fanout: 3,
            rounds: 2,
            wave_spacing: 1,
        }
    }

    fn process(id: u32, n: u32, size: usize) -> PrbProcess<Note> {
        let reg: BTreeSet<_> = (0..n).collect();
        let rng = ChaCha20Rng::seed_from_u64(u64::from(id));
        PrbProcess::new(id, &reg, SampleConfig::with_size(size), gossip(), rng)
            .unwrap()
            .0
    }

    fn dig(slot: u32, body: u8) -> Digest {
        Note { slot, body }.digest()
    }

    #[test]
    fn first_gossip_echoes_once() {
        let mut p = process(0, 8, 3);
        p.on_message(5, PrbMessage::Subscribe(SubscribeKind::Echo), |_| true);
        let out = p.on_message(1, PrbMessage::Gossip(Note { slot: 0, body: 1 }), |_| true);
        let echoes: Vec<_> = out
            .iter()
            .filter(|a| matches!(a, Action::Send { msg: PrbMessage::Echo { .. }, .. }))
            .collect();
        assert_eq!(echoes.len(), 1);
        assert_eq!(p.instance(&0).unwrap().echo_sent, Some(dig(0, 1)));
        let out = p.on_message(2, PrbMessage::Gossip(Note { slot: 0, body: 2 }), |_| true);
        assert!(!out
            .iter()
            .any(|a| matches!(a, Action::Send { msg: PrbMessage::Echo { .. }, .. })));
        assert_eq!(p.instance(&0).unwrap().echo_sent, Some(dig(0, 1)));
        assert_eq!(p.instance(&0).unwrap().candidates.len(), 2);
    }

    #[test]
    fn unauthentic_gossip_ignored() {
        let mut p = process(0, 8, 3);
        p.on_message(5, PrbMessage::Subscribe(SubscribeKind::Echo), |_| true);
        let out = p.on_message(1, PrbMessage::Gossip(Note { slot: 0, body: 1 }), |_| false);
        assert!(out.is_empty());
        assert!(p.instance(&0).is_none());
    }

    #[test]
    fn echo_threshold_triggers_single_ready() {
        let mut p = process(0, 12, 6);
        p.on_message(9, PrbMessage::Subscribe(SubscribeKind::Ready), |_| true);
        let echo: Vec<_> = p.samples().echo.iter().copied().collect();
        let e = p.config().echo_threshold;
        let d = dig(0, 1);
        for (k, from) in echo.iter().enumerate().take(e) {
            let out = p.on_message(*from, PrbMessage::Echo { instance: 0, digest: d }, |_| true);
            let readies = out
                .iter()
                .filter(|a| matches!(a, Action::Send { msg: PrbMessage::Ready { .. }, .. }))
                .count();
            assert_eq!(readies, usize::from(k + 1 == e));
        }
        assert_eq!(p.instance(&0).unwrap().ready_sent, Some(d));
        let out = p.on_message(echo[e], PrbMessage::Echo { instance: 0, digest: d }, |_| true);
        assert!(out.is_empty());
    }

    #[test]
    fn duplicate_echo_counted_once() {
        let mut p = process(0, 12, 3);
        let from = *p.samples().echo.iter().next().unwrap();
        for _ in 0..3 {
            p.on_message(from, PrbMessage::Echo { instance: 0, digest: dig(0, 1) }, |_| true);
        }
        let st = p.instance(&0).unwrap();
        assert_eq!(st.echoes[&dig(0, 1)].len(), 1);
        assert!(st.ready_sent.is_none());
    }

    #[test]
    fn outsiders_are_not_heard() {
        let mut p = process(0, 40, 3);
        let all: BTreeSet<_> = (1..40).collect();
        let listened: BTreeSet<_> = p
            .samples()
            .echo
            .union(&p.samples().ready)
            .chain(p.samples().delivery.iter())
            .copied()
            .collect();
        let outsider = *all.difference(&listened).next().unwrap();
        p.on_message(outsider, PrbMessage::Echo { instance: 0, digest: dig(0, 1) }, |_| true);
        p.on_message(outsider, PrbMessage::Ready { instance: 0, digest: dig(0, 1) }, |_| true);
        assert!(p.instance(&0).is_none());
    }

    #[test]
    fn delivers_once_after_more_than_d_readies() {
        let mut p = process(0, 12, 6);
        let note = Note { slot: 0, body: 1 };
        p.on_message(1, PrbMessage::Gossip(note.clone()), |_| true);
        let delivery: Vec<_> = p.samples().delivery.iter().copied().collect();
        let d = p.config().delivery_threshold;
        let mut delivered = 0;
        for from in &delivery {
            let out = p.on_message(*from, PrbMessage::Ready { instance: 0, digest: note.digest() }, |_| true);
            delivered += out.iter().filter(|a| matches!(a, Action::Deliver(_))).count();
            if delivered == 0 {
                assert!(p.instance(&0).unwrap().delivery_readies[&note.digest()].len() <= d);
            }
        }
        assert_eq!(delivered, 1);
        assert_eq!(p.instance(&0).unwrap().delivered, Some(note.digest()));
    }

    #[test]
    fn late_payload_still_delivers() {
        let mut p = process(0, 12, 6);
        let note = Note { slot: 3, body: 7 };
        for from in p.samples().delivery.clone() {
            let out = p.on_message(from, PrbMessage::Ready { instance: 3, digest: note.digest() }, |_| true);
            assert!(!out.iter().any(|a| matches!(a, Action::Deliver(_))));
        }
        let out = p.on_message(1, PrbMessage::Gossip(note.clone()), |_| true);
        assert!(out.contains(&Action::Deliver(note)));
    }

    #[test]
    fn late_subscriber_catches_up() {
        let mut p = process(0, 8, 3);
        p.on_message(1, PrbMessage::Gossip(Note { slot: 0, body: 1 }), |_| true);
        let out = p.on_message(4, PrbMessage::Subscribe(SubscribeKind::Echo), |_| true);
        assert_eq!(
            out,
            vec![Action::Send {
                to: 4,
                msg: PrbMessage::Echo { instance: 0, digest: dig(0, 1) },
                delay: 0
            }]
        );
    }

    /// Synchronous all-honest network, FIFO delivery.
    fn run_network(n: u32, size: usize, origin: u32, payloads: &[Note]) -> Vec<Vec<Note>> {
        let reg: BTreeSet<_> = (0..n).collect();
        let mut procs = Vec::new();
        let mut queue = VecDeque::new();
        for id in 0..n {
            let rng = ChaCha20Rng::seed_from_u64(1000 + u64::from(id));
            let (p, acts) =
                PrbProcess::new(id, &reg, SampleConfig::with_size(size), gossip(), rng).unwrap();
            procs.push(p);
            queue.extend(acts.into_iter().map(|a| (id, a)));
        }
        let mut delivered = vec![Vec::new(); n as usize];
        let pump = |queue: &mut VecDeque<(u32, Action<Note>)>,
                        procs: &mut Vec<PrbProcess<Note>>,
                        delivered: &mut Vec<Vec<Note>>| {
            while let Some((from, act)) = queue.pop_front() {
                match act {
                    Action::Send { to, msg, .. } => {
                        let out = procs[to as usize].on_message(from, msg, |_| true);
                        queue.extend(out.into_iter().map(|a| (to, a)));
                    }
                    Action::Deliver(p) => delivered[from as usize].push(p),
                }
            }
        };
        pump(&mut queue, &mut procs, &mut delivered);
        for note in payloads {
            let out = procs[origin as usize].broadcast(note.clone());
            queue.extend(out.into_iter().map(|a| (origin, a)));
        }
        pump(&mut queue, &mut procs, &mut delivered);
        delivered
    }

    #[test]
    fn tiny_network_delivers_everywhere() {
        let note = Note { slot: 1, body: 9 };
        let delivered = run_network(6, 5, 2, std::slice::from_ref(&note));
        for d in delivered {
            assert_eq!(d, vec![note.clone()]);
        }
    }

    #[test]
    fn conflicting_payloads_deliver_at_most_one() {
        let a = Note { slot: 1, body: 1 };
        let b = Note { slot: 1, body: 2 };
        let delivered = run_network(20, 6, 0, &[a, b]);
        for d in &delivered {
            assert!(d.len() <= 1);
        }
        let kinds: BTreeSet<_> = delivered.iter().flatten().map(|n| n.body).collect();
        assert!(kinds.len() <= 1);
    }
}
