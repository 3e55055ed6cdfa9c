//! Independent re-execution model of the subnet ledger, and the fuzz
//! comparison against the certificate validity check.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest as _, Sha256};
use tce_core::certificate::{
    batch_root, binding_digest, prepare_certificate, valid_cert, Certificate, CrossSubnetMessage, Digest, MerklePath,
    SubnetGroup, SubnetId, SubnetState, Transaction, TransitionProof, XsInclusionProof,
};
use tce_core::group::Group;
use tce_core::ice_frost::{run_keygen, KeyMaterial, SessionContext, ThresholdParams};

use crate::Verdict;

#[derive(Debug, Clone, Default)]
struct Model {
    height: u64,
    balances: BTreeMap<(String, String), u64>,
    log: BTreeSet<[u8; 32]>,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend((s.len() as u32).to_be_bytes());
    out.extend(s.as_bytes());
}

impl Model {
    fn encode(&self) -> Vec<u8> {
        let mut out = self.height.to_be_bytes().to_vec();
        let live: Vec<_> = self.balances.iter().filter(|(_, v)| **v > 0).collect();
        out.extend((live.len() as u32).to_be_bytes());
        for ((a, b), v) in live {
            put_str(&mut out, a);
            put_str(&mut out, b);
            out.extend(v.to_be_bytes());
        }
        out.extend((self.log.len() as u32).to_be_bytes());
        for d in &self.log {
            out.extend(d);
        }
        out
    }

    fn commitment(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"tce-state");
        h.update(self.encode());
        h.finalize().into()
    }

    fn state(&self) -> SubnetState {
        SubnetState::decode(&self.encode()).expect("model encodes a canonical state")
    }

    fn take(&mut self, who: &str, asset: &str, amount: u64) -> bool {
        let slot = self.balances.entry((who.into(), asset.into())).or_insert(0);
        if *slot < amount {
            return false;
        }
        *slot -= amount;
        true
    }

    fn give(&mut self, who: &str, asset: &str, amount: u64) -> bool {
        let slot = self.balances.entry((who.into(), asset.into())).or_insert(0);
        match slot.checked_add(amount) {
            Some(v) => {
                *slot = v;
                true
            }
            None => false,
        }
    }

    /// The post-state, or `None` if any transaction is invalid.
    fn execute(&self, own: &SubnetId, txs: &[Transaction]) -> Option<Model> {
        let mut m = self.clone();
        for tx in txs {
            let ok = match tx {
                Transaction::LocalTransfer { from, to, asset_id, amount } => {
                    *amount > 0 && m.take(from, asset_id, *amount) && m.give(to, asset_id, *amount)
                }
                Transaction::OutboundXS { from, message } => match message {
                    CrossSubnetMessage::TransferAsset { target_subnet, asset_id, amount, .. } => {
                        target_subnet != own && *amount > 0 && m.take(from, asset_id, *amount)
                    }
                    CrossSubnetMessage::ContractCall { target_subnet, .. } => target_subnet != own,
                },
                Transaction::InboundMint { digest, recipient, asset_id, amount } => {
                    *amount > 0 && m.log.insert(digest.0) && m.give(recipient, asset_id, *amount)
                }
            };
            if !ok {
                return None;
            }
        }
        m.height = m.height.checked_add(1)?;
        Some(m)
    }
}

const ACCOUNTS: [&str; 4] = ["a", "b", "c", "d"];
const ASSETS: [&str; 2] = ["X", "Y"];

fn own_subnet() -> SubnetId {
    SubnetId::from_bytes([1; 32])
}

fn other_subnet() -> SubnetId {
    SubnetId::from_bytes([2; 32])
}

fn pick<'a>(rng: &mut ChaCha20Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.random_range(0..xs.len())]
}

fn amount(rng: &mut ChaCha20Rng) -> u64 {
    match rng.random_range(0..20) {
        0 => 0,
        1 => u64::MAX,
        _ => rng.random_range(1..80),
    }
}

fn fuzz_model(rng: &mut ChaCha20Rng) -> Model {
    let mut m = Model {
        height: rng.random_range(0..5),
        ..Model::default()
    };
    for a in ACCOUNTS {
        for b in ASSETS {
            if rng.random_bool(0.6) {
                m.balances.insert((a.into(), b.into()), rng.random_range(1..120));
            }
        }
    }
    for i in 0..rng.random_range(0..3u8) {
        m.log.insert([i; 32]);
    }
    m
}

fn fuzz_tx(rng: &mut ChaCha20Rng) -> Transaction {
    let target = if rng.random_bool(0.05) { own_subnet() } else { other_subnet() };
    match rng.random_range(0..10) {
        0..=3 => Transaction::LocalTransfer {
            from: pick(rng, &ACCOUNTS).into(),
            to: pick(rng, &ACCOUNTS).into(),
            asset_id: pick(rng, &ASSETS).into(),
            amount: amount(rng),
        },
        4..=6 => Transaction::OutboundXS {
            from: pick(rng, &ACCOUNTS).into(),
            message: CrossSubnetMessage::TransferAsset {
                target_subnet: target,
                asset_id: pick(rng, &ASSETS).into(),
                recipient: pick(rng, &ACCOUNTS).into(),
                amount: amount(rng),
            },
        },
        7 => Transaction::OutboundXS {
            from: pick(rng, &ACCOUNTS).into(),
            message: CrossSubnetMessage::ContractCall {
                target_subnet: target,
                contract_addr: "dex".into(),
                func_name: "swap".into(),
                func_args: vec![rng.random()],
            },
        },
        _ => Transaction::InboundMint {
            digest: Digest([rng.random_range(0..4u8); 32]),
            recipient: pick(rng, &ACCOUNTS).into(),
            asset_id: pick(rng, &ASSETS).into(),
            amount: amount(rng),
        },
    }
}

fn fuzz_batch(rng: &mut ChaCha20Rng) -> Vec<Transaction> {
    (0..rng.random_range(0..6)).map(|_| fuzz_tx(rng)).collect()
}

fn emitted(txs: &[Transaction]) -> (Vec<CrossSubnetMessage>, Vec<XsInclusionProof>) {
    let leaves: Vec<_> = txs.iter().map(Transaction::encode).collect();
    let mut xs = Vec::new();
    let mut proofs = Vec::new();
    for (i, tx) in txs.iter().enumerate() {
        if let Transaction::OutboundXS { from, message } = tx {
            xs.push(message.clone());
            proofs.push(XsInclusionProof {
                from: from.clone(),
                path: MerklePath::build(&leaves, i).unwrap(),
            });
        }
    }
    (xs, proofs)
}

/// A certificate claiming `claimed` as the post-state of `txs`, built
/// without running the transition function.
fn forge(pre: &Model, txs: &[Transaction], claimed: [u8; 32], signature: &Certificate) -> Certificate {
    let prev = Digest(pre.commitment());
    let next = Digest(claimed);
    let root = batch_root(txs);
    let (xs_list, proof_xs_list) = emitted(txs);
    Certificate {
        subnet_id: own_subnet(),
        prev_state_hash: prev,
        state_hash: next,
        proof: TransitionProof {
            pre_state: pre.state(),
            tx_batch: txs.to_vec(),
            batch_root: root,
            binding: binding_digest(&prev, &next, &root),
        },
        xs_list,
        proof_xs_list,
        signature: signature.signature,
    }
}

fn subnet_keys() -> BTreeMap<u32, KeyMaterial<SubnetGroup>> {
    let mut rng = ChaCha20Rng::seed_from_u64(80);
    run_keygen(
        ThresholdParams::new(2, 3).unwrap(),
        SessionContext::new(80, 0, b"oracle".to_vec()),
        &BTreeMap::new(),
        &mut rng,
    )
    .unwrap()
    .keys
}

fn accepted(c: &Certificate) -> bool {
    c.verify_signature() && valid_cert(c)
}

fn flip(d: &Digest) -> Digest {
    let mut b = d.0;
    b[0] ^= 1;
    Digest(b)
}

/// Every single-field perturbation of `c`, with whether the intrinsic check
/// alone must catch it.
fn perturbations(c: &Certificate) -> Vec<(&'static str, Certificate, bool)> {
    let mut out = Vec::new();
    let mut p = c.clone();
    p.subnet_id = other_subnet();
    out.push(("subnet_id", p, false));
    let mut p = c.clone();
    p.prev_state_hash = flip(&c.prev_state_hash);
    out.push(("prev_state_hash", p, true));
    let mut p = c.clone();
    p.state_hash = flip(&c.state_hash);
    out.push(("state_hash", p, true));
    let mut p = c.clone();
    let pre = Model {
        height: c.proof.pre_state.height() + 1,
        ..Model::default()
    };
    p.proof.pre_state = pre.state();
    out.push(("pre_state", p, true));
    let mut p = c.clone();
    match p.proof.tx_batch.first_mut() {
        Some(Transaction::LocalTransfer { amount, .. })
        | Some(Transaction::InboundMint { amount, .. })
        | Some(Transaction::OutboundXS {
            message: CrossSubnetMessage::TransferAsset { amount, .. },
            ..
        }) => *amount ^= 1,
        Some(Transaction::OutboundXS { from, .. }) => from.push('x'),
        None => p.proof.tx_batch.push(Transaction::LocalTransfer {
            from: "a".into(),
            to: "b".into(),
            asset_id: "X".into(),
            amount: 1,
        }),
    }
    out.push(("tx_batch", p, true));
    let mut p = c.clone();
    p.proof.batch_root = flip(&c.proof.batch_root);
    out.push(("batch_root", p, true));
    let mut p = c.clone();
    p.proof.binding = flip(&c.proof.binding);
    out.push(("binding", p, true));
    let mut p = c.clone();
    match p.xs_list.first_mut() {
        Some(CrossSubnetMessage::TransferAsset { amount, .. }) => *amount += 1,
        Some(CrossSubnetMessage::ContractCall { func_args, .. }) => func_args.push(0),
        None => p.xs_list.push(CrossSubnetMessage::ContractCall {
            target_subnet: other_subnet(),
            contract_addr: "x".into(),
            func_name: "f".into(),
            func_args: Vec::new(),
        }),
    }
    out.push(("xs_list", p, true));
    let mut p = c.clone();
    match p.proof_xs_list.first_mut() {
        Some(incl) if !incl.path.siblings.is_empty() => incl.path.siblings[0] = flip(&incl.path.siblings[0]),
        Some(incl) => incl.from.push('x'),
        None => p.proof_xs_list.push(XsInclusionProof {
            from: "a".into(),
            path: MerklePath {
                leaf_index: 0,
                leaf_count: 1,
                siblings: Vec::new(),
            },
        }),
    }
    out.push(("proof_xs_list", p, true));
    let mut p = c.clone();
    p.signature.z += SubnetGroup::one();
    out.push(("signature", p, false));
    out
}

pub fn intrinsic_validity() -> Verdict {
    let keys = subnet_keys();
    let signers = [1, 2].into();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let mut sign_rng = ChaCha20Rng::seed_from_u64(81);
    let reference = {
        let (u, _) = prepare_certificate(own_subnet(), &SubnetState::new(), &[]).unwrap();
        u.sign(&keys, &signers, &mut sign_rng).unwrap()
    };

    let mut agree = 0;
    let mut valid_pairs = 0;
    let mut disagreements = Vec::new();
    let mut signed = Vec::new();
    for case in 0..1000 {
        let model = fuzz_model(&mut rng);
        let batch = fuzz_batch(&mut rng);
        let expected = model.execute(&own_subnet(), &batch);
        let state = model.state();
        let got = match prepare_certificate(own_subnet(), &state, &batch) {
            Ok((u, next)) => {
                let c = u.with_signature(reference.signature);
                let ok = valid_cert(&c);
                let post = next.commitment().0;
                if ok && signed.len() < 100 {
                    signed.push((state.clone(), batch.clone()));
                }
                ok.then_some(post)
            }
            Err(_) => {
                // The prover refuses; a forged claim must not verify either,
                // whatever post-state it names.
                let mut fallback = model.clone();
                fallback.height += 1;
                let forged = forge(&model, &batch, fallback.commitment(), &reference);
                valid_cert(&forged).then_some(fallback.commitment())
            }
        };
        valid_pairs += usize::from(expected.is_some());
        if got == expected.as_ref().map(Model::commitment) {
            agree += 1;
        } else if disagreements.len() < 5 {
            disagreements.push(case);
        }
    }

    let y = keys[&1].group_key();
    let mut perturbed = 0;
    let mut escaped = Vec::new();
    let mut originals_ok = 0;
    for (state, batch) in &signed {
        let (u, _) = prepare_certificate(SubnetId::from_group_key(&y), state, batch).unwrap();
        let cert = u.sign(&keys, &signers, &mut sign_rng).unwrap();
        originals_ok += usize::from(accepted(&cert));
        for (field, p, intrinsic) in perturbations(&cert) {
            perturbed += 1;
            if accepted(&p) || (intrinsic && valid_cert(&p)) {
                escaped.push(field);
            }
        }
    }

    let passed = agree == 1000 && signed.len() == 100 && originals_ok == 100 && escaped.is_empty();
    Verdict::new(
        passed,
        format!(
            "oracle agreement {agree}/1000 ({valid_pairs} valid), {perturbed} perturbations of {originals_ok} signed certificates, escaped {escaped:?}, disagreeing cases {disagreements:?}"
        ),
    )
}
