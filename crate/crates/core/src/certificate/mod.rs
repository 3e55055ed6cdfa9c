//! Subnet certificates: the signed, self-validating unit the TCE delivers.
//!
//! A [`Certificate`] commits to one state transition of its subnet
//! (`prev_state_hash → state_hash`), carries a [`TransitionProof`] for it,
//! lists the cross-subnet messages the batch emitted together with Merkle
//! inclusion proofs into the batch root, and is threshold-signed by the
//! subnet. [`valid_cert`] is stateless: it checks only the certificate's own
//! bytes.

mod codec;
mod merkle;
mod proof;
mod state;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use curve25519_dalek::RistrettoPoint;
use rand::{CryptoRng, Rng};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use crate::group::{Group, Ristretto255};
use crate::ice_frost::{
    run_signing, verify_signature, FrostError, KeyMaterial, ParticipantIndex, ThresholdSignature,
};

pub use codec::{Reader, Writer};
pub use merkle::{leaf_hash, merkle_root, MerklePath};
pub use proof::{
    batch_root, binding_digest, prove_transition, verify_transition, ProofSystem, ReExecution,
    TransitionProof,
};
pub use state::{
    apply_stf, AccountId, AssetId, CrossSubnetMessage, StateCommitment, SubnetState, Transaction,
};

/// The certificate layer is fixed to Ristretto255 subnet keys.
pub type SubnetGroup = Ristretto255;
pub type CertSignature = ThresholdSignature<SubnetGroup>;

const MAGIC: &[u8; 4] = b"TCEC";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CertError {
    #[error("{account} holds {available} of {asset}, needs {needed}")]
    InsufficientBalance {
        account: String,
        asset: String,
        needed: u64,
        available: u64,
    },
    #[error("amounts must be positive")]
    ZeroAmount,
    #[error("inbound message {0} was already applied")]
    DuplicateMint(Digest),
    #[error("balance or height overflow")]
    Overflow,
    #[error("cross-subnet message addressed to its own subnet")]
    SelfAddressed,
    #[error("subnet id is not a valid group element")]
    InvalidSubnetId,
    #[error("decode error: {0}")]
    Decode(&'static str),
    #[error(transparent)]
    Signing(#[from] FrostError),
}

/// A 32-byte SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).ok()?;
        Some(Self(out))
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short())
    }
}

/// Encoding of a subnet's static group key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubnetId([u8; 32]);

impl SubnetId {
    pub fn from_group_key(key: &RistrettoPoint) -> Self {
        Self(key.compress().to_bytes())
    }

    /// Wraps raw bytes; [`SubnetId::group_key`] tells whether they decode.
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn group_key(&self) -> Result<RistrettoPoint, CertError> {
        SubnetGroup::decode_element(&self.0).map_err(|_| CertError::InvalidSubnetId)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        Digest::from_hex(s).map(|d| Self(d.0))
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Display for SubnetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for SubnetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SubnetId({})", self.short())
    }
}

macro_rules! hex_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_string())
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                <$t>::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 32 hex bytes"))
            }
        }
    };
}

hex_serde!(Digest);
hex_serde!(SubnetId);

/// Where an emitted message sits in the committed batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XsInclusionProof {
    /// Sender of the `OutboundXS` transaction, needed to rebuild the leaf.
    pub from: AccountId,
    pub path: MerklePath,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnsignedCertificate {
    pub subnet_id: SubnetId,
    pub prev_state_hash: StateCommitment,
    pub state_hash: StateCommitment,
    pub proof: TransitionProof,
    pub xs_list: Vec<CrossSubnetMessage>,
    pub proof_xs_list: Vec<XsInclusionProof>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub subnet_id: SubnetId,
    pub prev_state_hash: StateCommitment,
    pub state_hash: StateCommitment,
    pub proof: TransitionProof,
    pub xs_list: Vec<CrossSubnetMessage>,
    pub proof_xs_list: Vec<XsInclusionProof>,
    pub signature: CertSignature,
}

struct Body<'a> {
    subnet_id: &'a SubnetId,
    prev_state_hash: &'a StateCommitment,
    state_hash: &'a StateCommitment,
    proof: &'a TransitionProof,
    xs_list: &'a [CrossSubnetMessage],
    proof_xs_list: &'a [XsInclusionProof],
}

impl Body<'_> {
    fn encode_into(&self, w: &mut Writer) {
        w.fixed(MAGIC)
            .u8(VERSION)
            .fixed(self.subnet_id.as_bytes())
            .fixed(self.prev_state_hash.as_bytes())
            .fixed(self.state_hash.as_bytes());
        self.proof.encode_into(w);
        w.count(self.xs_list.len());
        for m in self.xs_list {
            m.encode_into(w);
        }
        w.count(self.proof_xs_list.len());
        for p in self.proof_xs_list {
            w.str(&p.from)
                .u32(p.path.leaf_index)
                .u32(p.path.leaf_count)
                .count(p.path.siblings.len());
            for s in &p.path.siblings {
                w.fixed(s.as_bytes());
            }
        }
    }
}

impl UnsignedCertificate {
    fn body(&self) -> Body<'_> {
        Body {
            subnet_id: &self.subnet_id,
            prev_state_hash: &self.prev_state_hash,
            state_hash: &self.state_hash,
            proof: &self.proof,
            xs_list: &self.xs_list,
            proof_xs_list: &self.proof_xs_list,
        }
    }

    /// Bytes covered by the subnet signature.
    pub fn signing_payload(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.body().encode_into(&mut w);
        w.finish()
    }

    pub fn with_signature(self, signature: CertSignature) -> Certificate {
        Certificate {
            subnet_id: self.subnet_id,
            prev_state_hash: self.prev_state_hash,
            state_hash: self.state_hash,
            proof: self.proof,
            xs_list: self.xs_list,
            proof_xs_list: self.proof_xs_list,
            signature,
        }
    }

    /// Signs with the given quorum, excluding misbehaving signers.
    pub fn sign<R: Rng + CryptoRng + ?Sized>(
        self,
        keys: &BTreeMap<ParticipantIndex, KeyMaterial<SubnetGroup>>,
        signers: &BTreeSet<ParticipantIndex>,
        rng: &mut R,
    ) -> Result<Certificate, CertError> {
        let out = run_signing(keys, signers, &self.signing_payload(), &BTreeMap::new(), rng)?;
        Ok(self.with_signature(out.signature))
    }
}

impl Certificate {
    fn body(&self) -> Body<'_> {
        Body {
            subnet_id: &self.subnet_id,
            prev_state_hash: &self.prev_state_hash,
            state_hash: &self.state_hash,
            proof: &self.proof,
            xs_list: &self.xs_list,
            proof_xs_list: &self.proof_xs_list,
        }
    }

    pub fn signing_payload(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.body().encode_into(&mut w);
        w.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.body().encode_into(&mut w);
        w.fixed(&self.signature.to_bytes());
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CertError> {
        let mut r = Reader::new(bytes);
        if &r.fixed::<4>()? != MAGIC {
            return Err(CertError::Decode("bad magic"));
        }
        if r.u8()? != VERSION {
            return Err(CertError::Decode("unsupported version"));
        }
        let subnet_id = SubnetId(r.fixed()?);
        let prev_state_hash = Digest(r.fixed()?);
        let state_hash = Digest(r.fixed()?);
        let proof = TransitionProof::decode_from(&mut r)?;
        let mut xs_list = Vec::new();
        for _ in 0..r.count()? {
            xs_list.push(CrossSubnetMessage::decode_from(&mut r)?);
        }
        let mut proof_xs_list = Vec::new();
        for _ in 0..r.count()? {
            let from = r.str()?;
            let leaf_index = r.u32()?;
            let leaf_count = r.u32()?;
            let mut siblings = Vec::new();
            for _ in 0..r.count()? {
                siblings.push(Digest(r.fixed()?));
            }
            proof_xs_list.push(XsInclusionProof {
                from,
                path: MerklePath {
                    leaf_index,
                    leaf_count,
                    siblings,
                },
            });
        }
        let sig: [u8; 64] = r.fixed()?;
        r.finish()?;
        let signature =
            CertSignature::from_bytes(&sig).map_err(|_| CertError::Decode("bad signature encoding"))?;
        Ok(Self {
            subnet_id,
            prev_state_hash,
            state_hash,
            proof,
            xs_list,
            proof_xs_list,
            signature,
        })
    }

    /// Identifier over the full encoding, signature included.
    pub fn digest(&self) -> Digest {
        let mut h = Sha256::new();
        h.update(b"tce-certificate");
        h.update(self.encode());
        Digest(h.finalize().into())
    }

    /// Certificate height after this transition.
    pub fn height(&self) -> u64 {
        self.proof.pre_state.height() + 1
    }

    pub fn verify_signature(&self) -> bool {
        self.subnet_id.group_key().is_ok_and(|y| {
            verify_signature::<SubnetGroup>(&y, &self.signing_payload(), &self.signature)
        })
    }

    /// Subnets addressed by at least one message.
    pub fn targets(&self) -> BTreeSet<SubnetId> {
        self.xs_list.iter().map(|m| *m.target()).collect()
    }

    /// Identifier of the `position`-th emitted message, used as the inbound
    /// mint digest on the receiving side.
    pub fn xs_message_id(&self, position: usize) -> Digest {
        let mut h = Sha256::new();
        h.update(b"tce-xs-message");
        h.update(self.subnet_id.as_bytes());
        h.update(self.state_hash.as_bytes());
        h.update((position as u32).to_be_bytes());
        Digest(h.finalize().into())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "digest": self.digest().to_string(),
            "subnet_id": self.subnet_id,
            "prev_state_hash": self.prev_state_hash,
            "state_hash": self.state_hash,
            "height": self.height(),
            "proof": {
                "pre_state": self.proof.pre_state.to_json(),
                "tx_batch": self.proof.tx_batch,
                "batch_root": self.proof.batch_root,
                "binding": self.proof.binding,
            },
            "xs_list": self.xs_list,
            "proof_xs_list": self.proof_xs_list,
            "signature": hex::encode(self.signature.to_bytes()),
        })
    }
}

/// `Verify_incl`: every listed message is exactly the `OutboundXS` batch
/// content, in batch order, each with a valid Merkle path. Messages must be
/// addressed to another subnet.
pub fn verify_inclusion(cert: &Certificate) -> bool {
    if cert.xs_list.len() != cert.proof_xs_list.len() {
        return false;
    }
    let emitted: Vec<_> = cert
        .proof
        .tx_batch
        .iter()
        .enumerate()
        .filter_map(|(i, tx)| match tx {
            Transaction::OutboundXS { from, message } => Some((i, from, message)),
            _ => None,
        })
        .collect();
    if emitted.len() != cert.xs_list.len() {
        return false;
    }
    for ((msg, incl), (pos, from, batch_msg)) in
        cert.xs_list.iter().zip(&cert.proof_xs_list).zip(emitted)
    {
        if msg != batch_msg
            || *from != incl.from
            || incl.path.leaf_index as usize != pos
            || *msg.target() == cert.subnet_id
        {
            return false;
        }
        let leaf = Transaction::OutboundXS {
            from: incl.from.clone(),
            message: msg.clone(),
        }
        .encode();
        if !incl.path.verify(&leaf, &cert.proof.batch_root) {
            return false;
        }
    }
    true
}

/// `Valid_cert`: the transition proof verifies and the emitted messages are
/// included. Depends on nothing but the certificate.
pub fn valid_cert(cert: &Certificate) -> bool {
    verify_transition(&cert.proof, &cert.prev_state_hash, &cert.state_hash)
        && verify_inclusion(cert)
}

/// Runs the transition, proves it and lists the emitted messages.
pub fn prepare_certificate(
    subnet_id: SubnetId,
    prev: &SubnetState,
    txs: &[Transaction],
) -> Result<(UnsignedCertificate, SubnetState), CertError> {
    let leaves: Vec<_> = txs.iter().map(Transaction::encode).collect();
    let mut xs_list = Vec::new();
    let mut proof_xs_list = Vec::new();
    for (i, tx) in txs.iter().enumerate() {
        if let Transaction::OutboundXS { from, message } = tx {
            if *message.target() == subnet_id {
                return Err(CertError::SelfAddressed);
            }
            xs_list.push(message.clone());
            proof_xs_list.push(XsInclusionProof {
                from: from.clone(),
                path: MerklePath::build(&leaves, i).expect("index within batch"),
            });
        }
    }
    let (proof, next) = prove_transition(prev, txs)?;
    Ok((
        UnsignedCertificate {
            subnet_id,
            prev_state_hash: prev.commitment(),
            state_hash: next.commitment(),
            proof,
            xs_list,
            proof_xs_list,
        },
        next,
    ))
}

/// Builds the next certificate of the subnet holding `keys` and signs it
/// with `signers`.
pub fn build_and_sign_certificate<R: Rng + CryptoRng + ?Sized>(
    keys: &BTreeMap<ParticipantIndex, KeyMaterial<SubnetGroup>>,
    signers: &BTreeSet<ParticipantIndex>,
    prev: &SubnetState,
    txs: &[Transaction],
    rng: &mut R,
) -> Result<(Certificate, SubnetState), CertError> {
    let y = keys
        .values()
        .next()
        .ok_or(CertError::Signing(FrostError::TooFewSigners { have: 0, need: 1 }))?
        .group_key();
    let (unsigned, next) = prepare_certificate(SubnetId::from_group_key(&y), prev, txs)?;
    Ok((unsigned.sign(keys, signers, rng)?, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ice_frost::{run_keygen, SessionContext, ThresholdParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn subnet_keys(seed: u64) -> BTreeMap<u32, KeyMaterial<SubnetGroup>> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let params = ThresholdParams::new(2, 3).unwrap();
        run_keygen::<SubnetGroup, _>(params, SessionContext::new(seed, 0, b"s".to_vec()), &BTreeMap::new(), &mut rng)
            .unwrap()
            .keys
    }

    fn other() -> SubnetId {
        SubnetId::from_group_key(&Ristretto255::generator())
    }

    fn out(amount: u64, to: &str) -> Transaction {
        Transaction::OutboundXS {
            from: "alice".into(),
            message: CrossSubnetMessage::TransferAsset {
                target_subnet: other(),
                asset_id: "X".into(),
                recipient: to.into(),
                amount,
            },
        }
    }

    fn sample(seed: u64) -> (Certificate, SubnetState, BTreeMap<u32, KeyMaterial<SubnetGroup>>) {
        let keys = subnet_keys(seed);
        let mut rng = ChaCha20Rng::seed_from_u64(seed + 100);
        let genesis = SubnetState::with_balances([("alice", "X", 100)]);
        let txs = vec![
            out(5, "bob"),
            Transaction::LocalTransfer {
                from: "alice".into(),
                to: "carol".into(),
                asset_id: "X".into(),
                amount: 7,
            },
            out(6, "dave"),
            out(1, "erin"),
        ];
        let (cert, _) =
            build_and_sign_certificate(&keys, &[1, 3].into(), &genesis, &txs, &mut rng).unwrap();
        (cert, genesis, keys)
    }

    #[test]
    fn honest_certificate_is_valid_and_signed() {
        let (cert, genesis, _) = sample(1);
        assert_eq!(cert.prev_state_hash, genesis.commitment());
        assert_eq!(cert.xs_list.len(), 3);
        assert!(valid_cert(&cert));
        assert!(verify_inclusion(&cert));
        assert!(cert.verify_signature());
        assert_eq!(cert.targets(), [other()].into());
    }

    #[test]
    fn encoding_round_trips() {
        let (cert, _, _) = sample(2);
        let bytes = cert.encode();
        assert_eq!(Certificate::decode(&bytes).unwrap(), cert);
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(Certificate::decode(&trailing).is_err());
        assert!(Certificate::decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn empty_xs_list_is_vacuously_included() {
        let keys = subnet_keys(3);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (cert, _) =
            build_and_sign_certificate(&keys, &[1, 2].into(), &SubnetState::new(), &[], &mut rng)
                .unwrap();
        assert!(cert.xs_list.is_empty());
        assert!(verify_inclusion(&cert));
        assert!(valid_cert(&cert));
    }

    #[test]
    fn tampered_xs_entry_rejected() {
        let (mut cert, _, _) = sample(4);
        if let CrossSubnetMessage::TransferAsset { amount, .. } = &mut cert.xs_list[1] {
            *amount += 1;
        }
        assert!(!valid_cert(&cert));
        let (mut cert, _, _) = sample(4);
        cert.proof_xs_list[0].path.siblings[0].0[5] ^= 1;
        assert!(!verify_inclusion(&cert));
        let (mut cert, _, _) = sample(4);
        cert.xs_list.pop();
        cert.proof_xs_list.pop();
        assert!(!verify_inclusion(&cert), "omitting an emitted message is caught");
        let (mut cert, _, _) = sample(4);
        cert.xs_list.swap(0, 1);
        cert.proof_xs_list.swap(0, 1);
        assert!(!verify_inclusion(&cert));
    }

    #[test]
    fn sibling_certificates_both_valid() {
        let keys = subnet_keys(5);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let genesis = SubnetState::with_balances([("alice", "X", 10)]);
        let (a, _) =
            build_and_sign_certificate(&keys, &[1, 2].into(), &genesis, &[out(10, "bob")], &mut rng)
                .unwrap();
        let (b, _) =
            build_and_sign_certificate(&keys, &[2, 3].into(), &genesis, &[out(10, "carol")], &mut rng)
                .unwrap();
        assert_eq!(a.prev_state_hash, b.prev_state_hash);
        assert_ne!(a.digest(), b.digest());
        assert!(valid_cert(&a) && valid_cert(&b));
    }

    #[test]
    fn self_addressed_message_refused() {
        let keys = subnet_keys(6);
        let own = SubnetId::from_group_key(&keys[&1].group_key());
        let tx = Transaction::OutboundXS {
            from: "alice".into(),
            message: CrossSubnetMessage::ContractCall {
                target_subnet: own,
                contract_addr: "c".into(),
                func_name: "f".into(),
                func_args: vec![],
            },
        };
        assert!(matches!(
            prepare_certificate(own, &SubnetState::new(), &[tx]),
            Err(CertError::SelfAddressed)
        ));
    }

    #[test]
    fn single_signer_below_threshold_fails() {
        let keys = subnet_keys(7);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        assert!(matches!(
            build_and_sign_certificate(&keys, &[1].into(), &SubnetState::new(), &[], &mut rng),
            Err(CertError::Signing(FrostError::TooFewSigners { .. }))
        ));
    }

    #[test]
    fn json_rendering_has_fields() {
        let (cert, _, _) = sample(8);
        let v = cert.to_json();
        assert_eq!(v["xs_list"].as_array().unwrap().len(), 3);
        assert_eq!(v["subnet_id"].as_str().unwrap(), cert.subnet_id.to_string());
        assert_eq!(v["proof"]["tx_batch"][0]["kind"], "outbound_xs");
    }
}
