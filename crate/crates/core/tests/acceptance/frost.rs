use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tce_core::group::{Group, Ristretto255};
use tce_core::ice_frost::{
    run_keygen, run_refresh, run_signing, verify_signature, KeyMaterial, KeygenFault, KeygenOutcome,
    SessionContext, SignatureAggregator, SigningFault, SigningSession, ThresholdParams,
};

use crate::Verdict;

type Keys = BTreeMap<u32, KeyMaterial<Ristretto255>>;

fn keygen(t: u32, n: u32, faults: &[(u32, KeygenFault)], seed: u64) -> KeygenOutcome<Ristretto255> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    run_keygen(
        ThresholdParams::new(t, n).unwrap(),
        SessionContext::new(seed, 0, b"acceptance".to_vec()),
        &faults.iter().copied().collect(),
        &mut rng,
    )
    .expect("key generation completes")
}

fn signs(keys: &Keys, set: &BTreeSet<u32>, msg: &[u8], seed: u64) -> bool {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let y = keys.values().next().unwrap().group_key();
    run_signing(keys, set, msg, &BTreeMap::new(), &mut rng)
        .is_ok_and(|out| verify_signature(&y, msg, &out.signature))
}

/// Runs the raw protocol for `set`, with the aggregator's threshold lowered
/// to `set.len()` so that an under-sized quorum gets combined at all.
fn forced_aggregate_verifies(keys: &Keys, set: &BTreeSet<u32>, msg: &[u8], seed: u64) -> bool {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut public = keys.values().next().unwrap().public.clone();
    let y = public.group_key;
    public.threshold = set.len() as u32;
    let mut sessions: Vec<_> = set.iter().map(|i| SigningSession::new(keys[i].clone(), msg)).collect();
    let comms: Vec<_> = sessions.iter_mut().map(|s| s.commit(&mut rng).unwrap()).collect();
    let agg = SignatureAggregator::new(&public, msg, &comms).unwrap();
    let shares: Vec<_> = sessions.iter_mut().map(|s| s.sign(&comms).unwrap()).collect();
    verify_signature(&y, msg, &agg.combine_unchecked(&shares))
}

fn subsets(n: u32, k: usize) -> Vec<BTreeSet<u32>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == k {
            out.push((1..=n).filter(|i| mask & (1 << (i - 1)) != 0).collect());
        }
    }
    out
}

fn random_subset(rng: &mut ChaCha20Rng, n: u32, k: usize) -> BTreeSet<u32> {
    let mut pool: Vec<u32> = (1..=n).collect();
    let mut set = BTreeSet::new();
    while set.len() < k {
        set.insert(pool.swap_remove(rng.random_range(0..pool.len())));
    }
    set
}

pub fn threshold_signing() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut checked = 0;
    let mut failures = Vec::new();
    for (t, n) in [(2u32, 3u32), (3, 5), (5, 9)] {
        let out = keygen(t, n, &[], u64::from(t * 100 + n));
        let keys = &out.keys;
        let same_y = keys.values().all(|k| k.group_key() == out.public.group_key);
        if !same_y {
            failures.push(format!("({t},{n}) holders disagree on Y"));
        }
        let full: Vec<_> = if n <= 5 {
            subsets(n, t as usize)
        } else {
            (0..50).map(|_| random_subset(&mut rng, n, t as usize)).collect()
        };
        let short: Vec<_> = if n <= 5 {
            subsets(n, t as usize - 1)
        } else {
            (0..50).map(|_| random_subset(&mut rng, n, t as usize - 1)).collect()
        };
        for (i, set) in full.iter().enumerate() {
            checked += 1;
            if !signs(keys, set, b"threshold", i as u64) {
                failures.push(format!("({t},{n}) quorum {set:?} failed"));
            }
        }
        for (i, set) in short.iter().enumerate() {
            checked += 1;
            let refused = !signs(keys, set, b"threshold", i as u64);
            let forced = !set.is_empty() && forced_aggregate_verifies(keys, set, b"threshold", i as u64);
            if !refused || forced {
                failures.push(format!("({t},{n}) sub-threshold set {set:?} signed"));
            }
        }
    }
    Verdict::new(failures.is_empty(), format!("{checked} signer sets checked {failures:?}"))
}

/// Key generation among 5 with threshold 3; `culprit` misbehaves.
fn excluded_consistently(fault: (u32, KeygenFault), culprit: u32, seed: u64) -> Result<(), String> {
    let out = keygen(3, 5, &[fault], seed);
    if out.excluded != BTreeSet::from([culprit]) {
        return Err(format!("{fault:?}: excluded {:?}", out.excluded));
    }
    let honest: BTreeSet<u32> = (1..=5).filter(|i| *i != culprit).collect();
    if out.keys.keys().copied().collect::<BTreeSet<_>>() != honest {
        return Err(format!("{fault:?}: key holders {:?}", out.keys.keys()));
    }
    for k in out.keys.values() {
        if k.public != out.public || k.public.holders().contains(&culprit) {
            return Err(format!("{fault:?}: holder {} has a different view", k.index));
        }
    }
    let quorum: BTreeSet<u32> = honest.iter().copied().take(3).collect();
    if !signs(&out.keys, &quorum, b"after exclusion", seed) {
        return Err(format!("{fault:?}: remaining quorum cannot sign"));
    }
    Ok(())
}

pub fn keygen_robustness() -> Verdict {
    let mut errors = Vec::new();
    let cases = [
        ((2, KeygenFault::BadShare(4)), 2),
        ((3, KeygenFault::BadProofOfKnowledge), 3),
        ((4, KeygenFault::BogusComplaint(1)), 4),
    ];
    for (i, (fault, culprit)) in cases.into_iter().enumerate() {
        if let Err(e) = excluded_consistently(fault, culprit, 60 + i as u64) {
            errors.push(e);
        }
    }

    let out = keygen(3, 5, &[], 64);
    let mut rng = ChaCha20Rng::seed_from_u64(65);
    let signers: BTreeSet<u32> = (1..=5).collect();
    let faults = BTreeMap::from([(2, SigningFault::BadResponse)]);
    match run_signing(&out.keys, &signers, b"bad response", &faults, &mut rng) {
        Ok(s) => {
            if s.excluded != BTreeSet::from([2])
                || s.signers.contains(&2)
                || !verify_signature(&out.public.group_key, b"bad response", &s.signature)
            {
                errors.push(format!("bad response: excluded {:?}", s.excluded));
            }
        }
        Err(e) => errors.push(format!("bad response: {e}")),
    }
    Verdict::new(
        errors.is_empty(),
        format!("bad share, bad proof of knowledge, bogus complaint, bad response {errors:?}"),
    )
}

pub fn refresh_keeps_key() -> Verdict {
    let out = keygen(3, 5, &[], 70);
    let y = out.public.group_key;
    let y_bytes = Ristretto255::encode_element(&y);
    let mut rng = ChaCha20Rng::seed_from_u64(71);
    let mut keys = out.keys.clone();
    let mut errors = Vec::new();
    // Each epoch one holder leaves and a new one joins.
    let epochs: [(u32, u32); 3] = [(5, 6), (1, 7), (3, 8)];
    let mut previous_epoch = Vec::new();
    for (epoch, (leaves, joins)) in epochs.into_iter().enumerate() {
        let carried: Keys = keys.iter().filter(|(i, _)| **i != leaves).map(|(i, k)| (*i, k.clone())).collect();
        let mut members: BTreeSet<u32> = carried.keys().copied().collect();
        members.insert(joins);
        let params = ThresholdParams::new(3, members.len() as u32).unwrap();
        let ctx = SessionContext::new(100 + epoch as u64, 0, b"acceptance".to_vec());
        let next = match run_refresh(params, ctx, &carried, &members, &BTreeMap::new(), &mut rng) {
            Ok(n) => n,
            Err(e) => {
                errors.push(format!("epoch {}: {e}", epoch + 1));
                break;
            }
        };
        if Ristretto255::encode_element(&next.public.group_key) != y_bytes {
            errors.push(format!("epoch {}: Y changed", epoch + 1));
        }
        if next.public.epoch != epoch as u64 + 1 {
            errors.push(format!("epoch counter {}", next.public.epoch));
        }
        let quorum: BTreeSet<u32> = [joins].into_iter().chain(members.iter().copied().take(2)).collect();
        if !signs(&next.keys, &quorum, b"fresh epoch", epoch as u64) {
            errors.push(format!("epoch {}: fresh quorum {quorum:?} failed", epoch + 1));
        }
        previous_epoch.push(keys);
        keys = next.keys;
    }

    // A stale share from the previous epoch in an otherwise fresh quorum.
    if let Some(stale_keys) = previous_epoch.last() {
        let common: Vec<u32> = keys.keys().filter(|i| stale_keys.contains_key(i)).copied().collect();
        let mut mixed = keys.clone();
        let mut stale = stale_keys[&common[0]].clone();
        stale.public = keys[&common[0]].public.clone();
        mixed.insert(common[0], stale);
        let quorum: BTreeSet<u32> = common.iter().copied().take(3).collect();
        if signs(&mixed, &quorum, b"mixed epoch", 9) || forced_aggregate_verifies(&mixed, &quorum, b"mixed epoch", 9) {
            errors.push("mixed-epoch quorum produced a valid signature".into());
        }
    }
    Verdict::new(
        errors.is_empty(),
        format!("3 refreshes with churn, Y={} {errors:?}", hex_prefix(&y_bytes)),
    )
}

fn hex_prefix(bytes: &[u8]) -> String {
    bytes.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
