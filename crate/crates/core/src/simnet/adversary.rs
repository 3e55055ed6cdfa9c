use serde::{Deserialize, Serialize};

use crate::prb::ProcessId;

use super::{SimConfig, SimError};

/// Which processes a behavior applies to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Every Byzantine process.
    Byzantine,
    Processes(Vec<ProcessId>),
}

impl Selection {
    pub fn contains(&self, id: ProcessId, byzantine: &std::collections::BTreeSet<ProcessId>) -> bool {
        match self {
            Self::Byzantine => byzantine.contains(&id),
            Self::Processes(ids) => ids.contains(&id),
        }
    }
}

/// Ways a Byzantine subnet can botch a signed certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Malformation {
    /// Claims a post-state the batch does not produce.
    WrongStateHash,
    /// Spends more than the sender holds; the claimed post-state is made up.
    Overspend,
    /// Leaves the last emitted message out of the xs list.
    HiddenMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    /// Byzantine subnet `subnet` (roster index) signs two conflicting
    /// certificates for chain height `slot`, gossips one to each half of the
    /// network and has every Byzantine process echo and ready each half's
    /// version towards that half. With `second_after`, the second
    /// certificate is instead pushed to everyone that many event-time units
    /// after the first.
    Equivocate {
        subnet: usize,
        slot: u64,
        #[serde(default)]
        second_after: Option<f64>,
    },
    /// Selected processes send nothing at all.
    Mute { processes: Selection },
    /// Messages from or to selected processes take `factor·latency + extra`.
    Delay {
        processes: Selection,
        #[serde(default = "one")]
        factor: f64,
        #[serde(default)]
        extra: f64,
    },
    /// Byzantine subnet `subnet` submits a correctly signed but ill-formed
    /// certificate at height `slot` (and stops producing blocks).
    BogusCert {
        subnet: usize,
        slot: u64,
        malformation: Malformation,
    },
    /// Key share holder `dealer` of subnet `subnet` sends a wrong share to
    /// `victim` during key generation.
    BadShare { subnet: usize, dealer: u32, victim: u32 },
    /// Key share holder `signer` returns wrong responses in every signing
    /// session of subnet `subnet`.
    BadResponse { subnet: usize, signer: u32 },
    /// An unregistered process gossips a certificate of an unregistered
    /// subnet to everyone at time `at`.
    Intrude { at: f64 },
}

fn one() -> f64 {
    1.0
}

/// Replayable adversary program; combined with the seed it fixes every
/// Byzantine action.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdversaryScript {
    #[serde(default)]
    pub behaviors: Vec<Behavior>,
}

impl AdversaryScript {
    pub fn new(behaviors: Vec<Behavior>) -> Self {
        Self { behaviors }
    }

    pub(crate) fn validate(&self, config: &SimConfig) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        let subnet = |i: usize| config.subnets.get(i);
        for b in &self.behaviors {
            match b {
                Behavior::Equivocate { subnet: s, slot, .. } | Behavior::BogusCert { subnet: s, slot, .. } => {
                    match subnet(*s) {
                        Some(spec) if spec.byzantine => {}
                        _ => return bad(format!("{b:?}: subnet must exist and be byzantine")),
                    }
                    if *slot == 0 || *slot > u64::from(config.workload.blocks) {
                        return bad(format!("{b:?}: slot outside 1..=blocks"));
                    }
                }
                Behavior::BadShare { subnet: s, dealer, victim } => {
                    let Some(spec) = subnet(*s) else {
                        return bad(format!("{b:?}: no such subnet"));
                    };
                    let m = spec.members.len() as u32;
                    if !(1..=m).contains(dealer) || !(1..=m).contains(victim) || dealer == victim {
                        return bad(format!("{b:?}: bad participant indices"));
                    }
                }
                Behavior::BadResponse { subnet: s, signer } => {
                    let Some(spec) = subnet(*s) else {
                        return bad(format!("{b:?}: no such subnet"));
                    };
                    if !(1..=spec.members.len() as u32).contains(signer) {
                        return bad(format!("{b:?}: bad signer index"));
                    }
                }
                Behavior::Mute { processes } | Behavior::Delay { processes, .. } => {
                    if let Selection::Processes(ids) = processes {
                        if ids.iter().any(|p| *p as usize >= config.n) {
                            return bad(format!("{b:?}: unknown process"));
                        }
                    }
                    if let Behavior::Delay { factor, extra, .. } = b {
                        if *factor < 1.0 || *extra < 0.0 {
                            return bad(format!("{b:?}: delays may only stretch latency"));
                        }
                    }
                }
                Behavior::Intrude { at } => {
                    if *at < 0.0 {
                        return bad(format!("{b:?}: negative time"));
                    }
                }
            }
        }
        Ok(())
    }
}
