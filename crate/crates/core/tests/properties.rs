use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use tce_core::certificate::{
    apply_stf, build_and_sign_certificate, merkle_root, valid_cert, Certificate, CrossSubnetMessage, MerklePath,
    SubnetGroup, SubnetId, SubnetState, Transaction,
};
use tce_core::harness::{audit_trace, scenarios, MetricsSummary};
use tce_core::ice_frost::{run_keygen, run_signing, verify_signature, KeyMaterial, SessionContext, ThresholdParams};
use tce_core::prb::{init_samples, SampleConfig};
use tce_core::simnet::{run, Trace};

fn keys() -> &'static BTreeMap<u32, KeyMaterial<SubnetGroup>> {
    static KEYS: OnceLock<BTreeMap<u32, KeyMaterial<SubnetGroup>>> = OnceLock::new();
    KEYS.get_or_init(|| {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        run_keygen(
            ThresholdParams::new(2, 3).unwrap(),
            SessionContext::new(1, 0, b"props".to_vec()),
            &BTreeMap::new(),
            &mut rng,
        )
        .unwrap()
        .keys
    })
}

fn account() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["a", "b", "c"]).prop_map(String::from)
}

fn tx() -> impl Strategy<Value = Transaction> {
    prop_oneof![
        (account(), account(), 1u64..40).prop_map(|(from, to, amount)| Transaction::LocalTransfer {
            from,
            to,
            asset_id: "X".into(),
            amount,
        }),
        (account(), account(), 1u64..40).prop_map(|(from, recipient, amount)| Transaction::OutboundXS {
            from,
            message: CrossSubnetMessage::TransferAsset {
                target_subnet: SubnetId::from_bytes([9; 32]),
                asset_id: "X".into(),
                recipient,
                amount,
            },
        }),
        (any::<[u8; 32]>(), account(), 1u64..40).prop_map(|(d, recipient, amount)| Transaction::InboundMint {
            digest: tce_core::certificate::Digest(d),
            recipient,
            asset_id: "X".into(),
            amount,
        }),
    ]
}

fn genesis() -> SubnetState {
    SubnetState::with_balances([("a", "X", 100), ("b", "X", 100), ("c", "X", 100)])
}

fn supply_delta(txs: &[Transaction]) -> i128 {
    txs.iter()
        .map(|t| match t {
            Transaction::LocalTransfer { .. } => 0,
            Transaction::OutboundXS {
                message: CrossSubnetMessage::TransferAsset { amount, .. },
                ..
            } => -i128::from(*amount),
            Transaction::OutboundXS { .. } => 0,
            Transaction::InboundMint { amount, .. } => i128::from(*amount),
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merkle_paths_verify_and_bind_the_leaf(leaves in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..12), 1..20), pick in any::<prop::sample::Index>()) {
        let root = merkle_root(&leaves);
        let i = pick.index(leaves.len());
        let path = MerklePath::build(&leaves, i).unwrap();
        prop_assert!(path.verify(&leaves[i], &root));
        let mut other = leaves[i].clone();
        other.push(0xff);
        prop_assert!(!path.verify(&other, &root));
    }

    #[test]
    fn transitions_change_supply_only_by_burns_and_mints(txs in prop::collection::vec(tx(), 0..8)) {
        let s = genesis();
        if let Ok(next) = apply_stf(&s, &txs) {
            let delta = next.supply("X") as i128 - s.supply("X") as i128;
            prop_assert_eq!(delta, supply_delta(&txs));
            prop_assert_eq!(next.height(), 1);
        }
    }

    #[test]
    fn signed_certificates_round_trip_and_verify(txs in prop::collection::vec(tx(), 0..6), seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let signers: BTreeSet<u32> = [1, 3].into();
        if let Ok((cert, next)) = build_and_sign_certificate(keys(), &signers, &genesis(), &txs, &mut rng) {
            prop_assert!(cert.verify_signature());
            prop_assert!(valid_cert(&cert));
            prop_assert_eq!(cert.state_hash, next.commitment());
            let back = Certificate::decode(&cert.encode()).unwrap();
            prop_assert_eq!(back.digest(), cert.digest());
            prop_assert_eq!(back, cert);
        }
    }

    #[test]
    fn default_samples_are_valid_and_exclude_self(n in 4usize..3000, me in any::<prop::sample::Index>(), seed in any::<u64>()) {
        let c = SampleConfig::for_network(n, 4.0);
        prop_assert!(c.validate().is_ok());
        prop_assert!(c.max_size() < n);
        let registry: BTreeSet<u32> = (0..n as u32).collect();
        let me = me.index(n) as u32;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let s = init_samples(me, &registry, &c, &mut rng).unwrap();
        for set in [&s.echo, &s.ready, &s.delivery] {
            prop_assert_eq!(set.len(), c.echo_size);
            prop_assert!(!set.contains(&me));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn any_quorum_signs(t in 1u32..5, extra in 0u32..3, seed in any::<u64>(), msg in prop::collection::vec(any::<u8>(), 0..32)) {
        let n = t + extra;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let out = run_keygen::<SubnetGroup, _>(
            ThresholdParams::new(t, n).unwrap(),
            SessionContext::new(seed, 0, b"q".to_vec()),
            &BTreeMap::new(),
            &mut rng,
        ).unwrap();
        let signers: BTreeSet<u32> = (1..=n).rev().take(t as usize).collect();
        let sig = run_signing(&out.keys, &signers, &msg, &BTreeMap::new(), &mut rng).unwrap();
        prop_assert!(verify_signature(&out.public.group_key, &msg, &sig.signature));
    }

    #[test]
    fn metrics_reduction_ignores_run_order(seeds in prop::collection::vec(0u64..1000, 2..5), rotate in 0usize..5) {
        let audits: Vec<_> = seeds.iter().map(|s| audit_trace(&run(tce_core::simnet::SimConfig::single_subnet(8, *s)).unwrap())).collect();
        let mut rotated = audits.clone();
        rotated.rotate_left(rotate % audits.len());
        prop_assert_eq!(MetricsSummary::reduce(&audits), MetricsSummary::reduce(&rotated));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn equivocation_never_breaks_safety(seed in any::<u64>(), n in 24usize..80) {
        let mut config = scenarios::double_spend(n, 0.1, 1).config_for(0);
        config.seed = seed;
        let trace = run(config).unwrap();
        let a = audit_trace(&trace);
        prop_assert_eq!(a.consistency_violations, 0);
        prop_assert_eq!(a.weak_causal_violations, 0);
        prop_assert_eq!(a.unsatisfied_deps, 0);
        prop_assert_eq!(a.duplicate_deliveries, 0);
        prop_assert_eq!(a.integrity_violations, 0);
        let back = Trace::read_jsonl(trace.to_jsonl().as_bytes()).unwrap();
        prop_assert_eq!(back.fingerprint(), trace.fingerprint());
    }

    #[test]
    fn honest_runs_converge(seed in any::<u64>(), n in 10usize..60) {
        let mut config = scenarios::conservation(n, 40, 1).config_for(0);
        config.seed = seed;
        config.workload.blocks = 4;
        let a = audit_trace(&run(config).unwrap());
        prop_assert!(a.all_delivered);
        prop_assert!(a.converged);
        prop_assert_eq!(a.supply_violations, 0);
        prop_assert_eq!(a.monotonicity_violations, 0);
    }
}
