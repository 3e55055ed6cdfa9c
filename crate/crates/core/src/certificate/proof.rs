//! Validity proofs for state transitions.
//!
//! [`ProofSystem`] is the prover/verifier interface a certificate relies on.
//! The only backend, [`ReExecution`], ships the batch together with the
//! pre-state and lets the verifier run the transition function itself: it
//! is sound and stateless for the verifier, but neither succinct nor private.

use sha2::{Digest as _, Sha256};

use super::codec::{Reader, Writer};
use super::merkle::merkle_root;
use super::state::{apply_stf, StateCommitment, SubnetState, Transaction};
use super::{CertError, Digest};

pub trait ProofSystem {
    type Proof;

    /// Runs the transition and proves it; fails when the transition does.
    fn prove(
        prev: &SubnetState,
        txs: &[Transaction],
    ) -> Result<(Self::Proof, SubnetState), CertError>;

    /// `Verif_C(proof, prev_hash, new_hash)`.
    fn verify(proof: &Self::Proof, prev: &StateCommitment, next: &StateCommitment) -> bool;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionProof {
    pub pre_state: SubnetState,
    pub tx_batch: Vec<Transaction>,
    pub batch_root: Digest,
    pub binding: Digest,
}

pub fn batch_root(txs: &[Transaction]) -> Digest {
    let leaves: Vec<_> = txs.iter().map(Transaction::encode).collect();
    merkle_root(&leaves)
}

pub fn binding_digest(prev: &StateCommitment, next: &StateCommitment, root: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update(b"tce-transition-binding");
    h.update(prev.as_bytes());
    h.update(next.as_bytes());
    h.update(root.as_bytes());
    Digest(h.finalize().into())
}

impl TransitionProof {
    pub(crate) fn encode_into(&self, w: &mut Writer) {
        w.bytes(&self.pre_state.encode()).count(self.tx_batch.len());
        for tx in &self.tx_batch {
            tx.encode_into(w);
        }
        w.fixed(self.batch_root.as_bytes())
            .fixed(self.binding.as_bytes());
    }

    pub(crate) fn decode_from(r: &mut Reader<'_>) -> Result<Self, CertError> {
        let pre_state = SubnetState::decode(&r.bytes()?)?;
        let n = r.count()?;
        let mut tx_batch = Vec::with_capacity(n);
        for _ in 0..n {
            tx_batch.push(Transaction::decode_from(r)?);
        }
        Ok(Self {
            pre_state,
            tx_batch,
            batch_root: Digest(r.fixed()?),
            binding: Digest(r.fixed()?),
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReExecution;

impl ProofSystem for ReExecution {
    type Proof = TransitionProof;

    fn prove(
        prev: &SubnetState,
        txs: &[Transaction],
    ) -> Result<(TransitionProof, SubnetState), CertError> {
        let next = apply_stf(prev, txs)?;
        let root = batch_root(txs);
        let proof = TransitionProof {
            pre_state: prev.clone(),
            tx_batch: txs.to_vec(),
            batch_root: root,
            binding: binding_digest(&prev.commitment(), &next.commitment(), &root),
        };
        Ok((proof, next))
    }

    fn verify(proof: &TransitionProof, prev: &StateCommitment, next: &StateCommitment) -> bool {
        if proof.pre_state.commitment() != *prev
            || batch_root(&proof.tx_batch) != proof.batch_root
            || binding_digest(prev, next, &proof.batch_root) != proof.binding
        {
            return false;
        }
        apply_stf(&proof.pre_state, &proof.tx_batch).is_ok_and(|s| s.commitment() == *next)
    }
}

pub fn prove_transition(
    prev: &SubnetState,
    txs: &[Transaction],
) -> Result<(TransitionProof, SubnetState), CertError> {
    ReExecution::prove(prev, txs)
}

pub fn verify_transition(
    proof: &TransitionProof,
    prev: &StateCommitment,
    next: &StateCommitment,
) -> bool {
    ReExecution::verify(proof, prev, next)
}
