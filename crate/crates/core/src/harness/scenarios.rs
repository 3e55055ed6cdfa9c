//! Built-in scenarios backing the acceptance criteria. The JSON files under
//! `crates/cli/scenarios` are serialised forms of these.

use crate::simnet::{AdversaryScript, Balance, Behavior, Malformation, Selection, SimConfig, SubnetSpec, Workload};

use super::{Assertion, Cmp, Scenario};

fn funds(accounts: &[&str], asset: &str, amount: u64) -> Vec<Balance> {
    accounts
        .iter()
        .map(|a| Balance {
            account: a.to_string(),
            asset: asset.into(),
            amount,
        })
        .collect()
}

/// Honest 2-of-3 subnet run by processes `first..first + 3`.
pub fn subnet(name: &str, first: u32, byzantine: bool) -> SubnetSpec {
    SubnetSpec {
        name: name.into(),
        members: vec![first, first + 1, first + 2],
        submitter: first,
        threshold: 2,
        balances: funds(&["alice", "bob", "carol"], "TKN", 1_000),
        byzantine,
    }
}

fn safety() -> Vec<Assertion> {
    vec![
        Assertion::new("consistency_violations", Cmp::Eq, 0.0),
        Assertion::new("weak_causal_violations", Cmp::Eq, 0.0),
        Assertion::new("unsatisfied_deps", Cmp::Eq, 0.0),
        Assertion::new("duplicate_deliveries", Cmp::Eq, 0.0),
        Assertion::new("integrity_violations", Cmp::Eq, 0.0),
        Assertion::new("monotonicity_violations", Cmp::Eq, 0.0),
    ]
}

/// Two honest subnets exchanging transfers over two blocks each.
pub fn honest_delivery(n: usize, repetitions: usize) -> Scenario {
    let mut assertions = safety();
    assertions.push(Assertion::new("full_delivery_fraction", Cmp::Ge, 0.99));
    Scenario {
        name: "honest-delivery".into(),
        description: "f = 0; every correct process delivers every honest certificate".into(),
        config: SimConfig {
            n,
            subnets: vec![subnet("s0", 0, false), subnet("s1", 3, false)],
            workload: Workload {
                blocks: 2,
                transfers: 8,
                local_fraction: 0.0,
                ..Workload::default()
            },
            audit_monotonicity: false,
            ..SimConfig::default()
        },
        repetitions,
        seed_base: 1_000,
        assertions,
    }
}

/// A Byzantine subnet double-spends its first slot; Byzantine TCE processes
/// back each version towards one half of the network.
pub fn double_spend(n: usize, byzantine_fraction: f64, repetitions: usize) -> Scenario {
    Scenario {
        name: "doublespend".into(),
        description: "coordinated equivocation on one slot; no two correct processes may disagree".into(),
        config: SimConfig {
            n,
            byzantine_fraction,
            subnets: vec![subnet("s0", 0, false), subnet("s1", 3, false), subnet("evil", 6, true)],
            workload: Workload {
                blocks: 2,
                transfers: 6,
                local_fraction: 0.0,
                ..Workload::default()
            },
            adversary: AdversaryScript::new(vec![Behavior::Equivocate {
                subnet: 2,
                slot: 1,
                second_after: None,
            }]),
            audit_monotonicity: false,
            ..SimConfig::default()
        },
        repetitions,
        seed_base: 2_000,
        assertions: safety(),
    }
}

/// The Byzantine subnet's first certificate is delivered, then a conflicting
/// one for the same slot is pushed to everyone.
pub fn reorg(n: usize, byzantine_fraction: f64, repetitions: usize) -> Scenario {
    let mut s = double_spend(n, byzantine_fraction, repetitions);
    s.name = "reorg".into();
    s.description = "conflicting certificate for an already final slot".into();
    s.config.adversary = AdversaryScript::new(vec![Behavior::Equivocate {
        subnet: 2,
        slot: 1,
        second_after: Some(30.0),
    }]);
    s.config.audit_monotonicity = true;
    s.seed_base = 3_000;
    s
}

/// Three honest subnets, many random transfers.
pub fn conservation(n: usize, transfers: u32, repetitions: usize) -> Scenario {
    let mut assertions = safety();
    assertions.push(Assertion::new("supply_violations", Cmp::Eq, 0.0));
    assertions.push(Assertion::new("supply_points", Cmp::Gt, 0.0));
    Scenario {
        name: "conservation".into(),
        description: "burn/mint transfers across three subnets keep every asset's supply constant".into(),
        config: SimConfig {
            n,
            subnets: vec![subnet("s0", 0, false), subnet("s1", 3, false), subnet("s2", 6, false)],
            workload: Workload {
                blocks: 25,
                block_interval: 4.0,
                transfers,
                local_fraction: 0.2,
                max_amount: 120,
                ..Workload::default()
            },
            horizon: 2_000.0,
            ..SimConfig::default()
        },
        repetitions,
        seed_base: 4_000,
        assertions,
    }
}

/// A Byzantine subnet submits a signed but ill-formed certificate.
pub fn bogus_certificate(n: usize, malformation: Malformation, validate_at_prb: bool) -> Scenario {
    let mut assertions = safety();
    assertions.push(Assertion::new("bogus_delivered", Cmp::Eq, 0.0));
    if validate_at_prb {
        assertions.push(Assertion::new("bogus_echoes", Cmp::Eq, 0.0));
    }
    Scenario {
        name: format!("bogus-cert-{malformation:?}").to_lowercase(),
        description: "ill-formed certificates never reach the history".into(),
        config: SimConfig {
            n,
            byzantine_fraction: 1.0 / n as f64,
            subnets: vec![subnet("s0", 0, false), subnet("evil", 3, true)],
            workload: Workload {
                blocks: 2,
                ..Workload::default()
            },
            adversary: AdversaryScript::new(vec![Behavior::BogusCert {
                subnet: 1,
                slot: 1,
                malformation,
            }]),
            validate_at_prb,
            ..SimConfig::default()
        },
        repetitions: 1,
        seed_base: 5_000,
        assertions,
    }
}

/// A share of the processes stays silent.
pub fn mute(n: usize, byzantine_fraction: f64, repetitions: usize) -> Scenario {
    let mut assertions = safety();
    assertions.push(Assertion::new("full_delivery_fraction", Cmp::Ge, 0.95));
    Scenario {
        name: "mute".into(),
        description: "liveness with silent Byzantine processes".into(),
        config: SimConfig {
            n,
            byzantine_fraction,
            subnets: vec![subnet("s0", 0, false)],
            adversary: AdversaryScript::new(vec![Behavior::Mute {
                processes: Selection::Byzantine,
            }]),
            ..SimConfig::default()
        },
        repetitions,
        seed_base: 6_000,
        assertions,
    }
}

/// A key share holder deals a bad share and another returns bad signature
/// responses; the subnet keeps certifying.
pub fn faulty_subnet(n: usize) -> Scenario {
    let mut s0 = subnet("s0", 0, false);
    s0.members = vec![0, 1, 2, 3, 4];
    s0.threshold = 3;
    let mut assertions = safety();
    assertions.push(Assertion::new("keygen_exclusions", Cmp::Eq, 1.0));
    assertions.push(Assertion::new("signing_exclusions", Cmp::Ge, 1.0));
    assertions.push(Assertion::new("full_delivery_fraction", Cmp::Eq, 1.0));
    Scenario {
        name: "faulty-subnet".into(),
        description: "bad share in key generation, bad response in signing".into(),
        config: SimConfig {
            n,
            subnets: vec![s0],
            workload: Workload {
                blocks: 2,
                ..Workload::default()
            },
            adversary: AdversaryScript::new(vec![
                Behavior::BadShare {
                    subnet: 0,
                    dealer: 5,
                    victim: 2,
                },
                Behavior::BadResponse { subnet: 0, signer: 4 },
            ]),
            ..SimConfig::default()
        },
        repetitions: 1,
        seed_base: 7_000,
        assertions,
    }
}

/// An unregistered process gossips a certificate of an unregistered subnet.
pub fn intrusion(n: usize) -> Scenario {
    let mut assertions = safety();
    assertions.push(Assertion::new("gate_drops", Cmp::Eq, n as f64));
    Scenario {
        name: "intrusion".into(),
        description: "messages from unregistered senders are dropped".into(),
        config: SimConfig {
            n,
            subnets: vec![subnet("s0", 0, false)],
            adversary: AdversaryScript::new(vec![Behavior::Intrude { at: 2.0 }]),
            ..SimConfig::default()
        },
        repetitions: 1,
        seed_base: 8_000,
        assertions,
    }
}

/// Every built-in scenario at desk scale.
pub fn library() -> Vec<Scenario> {
    vec![
        honest_delivery(200, 100),
        double_spend(200, 0.1, 100),
        reorg(200, 0.1, 20),
        conservation(30, 500, 1),
        bogus_certificate(40, Malformation::WrongStateHash, false),
        bogus_certificate(40, Malformation::Overspend, true),
        bogus_certificate(40, Malformation::HiddenMessage, true),
        mute(100, 0.1, 20),
        faulty_subnet(30),
        intrusion(30),
    ]
}
