//! Robust threshold Schnorr signatures with identifiable cheaters.
//!
//! The scheme has three parts:
//!
//! * a distributed key generation in which every participant deals a
//!   Feldman-committed polynomial, proves knowledge of its constant term and
//!   of a Diffie-Hellman encryption key, and sends encrypted shares over a
//!   public bulletin board. A recipient that receives a bad share publishes a
//!   [`Complaint`] revealing the pairwise DH key with a proof of its
//!   well-formedness, and every participant adjudicates it deterministically;
//! * two-round signing with per-response verification, so that a signer
//!   sending a bad response is identified and the remaining signers retry;
//! * share refresh, in which every participant deals a sharing of zero (plus,
//!   for a changed membership, a Lagrange-weighted re-sharing of the existing
//!   shares) so that the group key stays fixed while old shares become useless.
//!
//! The broadcast channel is modelled by [`KeygenTranscript`], a trusted
//! append-only board that every participant reads.

mod ceremony;
mod keygen;
mod sign;
mod transcript;

use std::collections::{BTreeMap, BTreeSet};

use crate::group::{Group, GroupError};

pub use ceremony::{
    run_keygen, run_refresh, run_signing, KeygenFault, KeygenOutcome, SigningFault,
    SigningOutcome,
};
pub use keygen::{
    adjudicate_complaint, compute_verification_share, verify_round1, DealingMode, DleqProof,
    KeygenSession, Phase, Round1Broadcast, Round1Fault, SchnorrProof, ShareReceipt, Verdict,
    VerdictReason,
};
pub use sign::{
    combine_responses, group_commitment, verify_signature, NonceCommitment, SignatureAggregator, SignatureShare,
    SigningSession, ThresholdSignature,
};
pub use transcript::{Complaint, EncryptedShare, KeygenTranscript, MaliciousDeclaration};

/// Nonzero participant index.
pub type ParticipantIndex = u32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrostError {
    #[error("invalid threshold parameters: t={threshold}, n={participants}")]
    InvalidParameters { threshold: u32, participants: u32 },
    #[error("participant index must be nonzero and unique")]
    InvalidIndex,
    #[error("operation not allowed in phase {0:?}")]
    WrongPhase(Phase),
    #[error("round one was already emitted")]
    AlreadyEmitted,
    #[error("key generation aborted: {remaining} participants remain, floor is {floor}")]
    Aborted { remaining: usize, floor: u32 },
    #[error("participant {0} is excluded")]
    Excluded(ParticipantIndex),
    #[error("missing data from participant {0}")]
    MissingData(ParticipantIndex),
    #[error("refresh dealers {0:?} were excluded; the refresh must restart without them")]
    RefreshDealerExcluded(BTreeSet<ParticipantIndex>),
    #[error("signer set has {have} members, threshold is {need}")]
    TooFewSigners { have: usize, need: u32 },
    #[error("signer {0} is not part of the signing set")]
    NotASigner(ParticipantIndex),
    #[error("nonces for this session were already generated")]
    NoncesAlreadyGenerated,
    #[error("nonces for this session were consumed or never generated")]
    NoncesUnavailable,
    #[error("nonce commitments do not match the signing set")]
    CommitmentMismatch,
    #[error("responses from {0:?} failed verification")]
    InvalidResponses(BTreeSet<ParticipantIndex>),
    #[error("malformed transcript: {0}")]
    Transcript(String),
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// `(t, n)` with the floor below which key generation aborts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ThresholdParams {
    pub threshold: u32,
    pub participants: u32,
    pub abort_floor: u32,
}

impl ThresholdParams {
    /// Abort floor defaults to `max(t, ⌈2n/3⌉)`.
    pub fn new(threshold: u32, participants: u32) -> Result<Self, FrostError> {
        if threshold == 0 || threshold > participants {
            return Err(FrostError::InvalidParameters {
                threshold,
                participants,
            });
        }
        let floor = threshold.max((2 * participants).div_ceil(3));
        Ok(Self {
            threshold,
            participants,
            abort_floor: floor,
        })
    }

    /// Overrides the abort floor; it is never allowed to drop below `t`.
    pub fn with_abort_floor(self, floor: u32) -> Result<Self, FrostError> {
        if floor < self.threshold || floor > self.participants {
            return Err(FrostError::InvalidParameters {
                threshold: self.threshold,
                participants: self.participants,
            });
        }
        Ok(Self {
            abort_floor: floor,
            ..self
        })
    }
}

/// Replay-protection context bound into every proof of knowledge.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SessionContext {
    pub session_id: u64,
    pub epoch: u64,
    #[serde(with = "hex::serde")]
    pub subnet_id: Vec<u8>,
}

impl SessionContext {
    pub fn new(session_id: u64, epoch: u64, subnet_id: impl Into<Vec<u8>>) -> Self {
        Self {
            session_id,
            epoch,
            subnet_id: subnet_id.into(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.subnet_id.len());
        out.extend_from_slice(&self.session_id.to_be_bytes());
        out.extend_from_slice(&self.epoch.to_be_bytes());
        out.extend_from_slice(&(self.subnet_id.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.subnet_id);
        out
    }
}

/// Public outcome of a key generation or refresh: the static group key and
/// every holder's verification share.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupKey<G: Group> {
    pub group_key: G::Element,
    pub threshold: u32,
    pub epoch: u64,
    pub verification_shares: BTreeMap<ParticipantIndex, G::Element>,
}

impl<G: Group> GroupKey<G> {
    pub fn holders(&self) -> BTreeSet<ParticipantIndex> {
        self.verification_shares.keys().copied().collect()
    }
}

/// One holder's long-lived signing share together with the public key data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyMaterial<G: Group> {
    pub index: ParticipantIndex,
    pub signing_share: G::Scalar,
    pub public: GroupKey<G>,
}

impl<G: Group> KeyMaterial<G> {
    pub fn verification_share(&self) -> G::Element {
        G::mul_base(&self.signing_share)
    }

    pub fn group_key(&self) -> G::Element {
        self.public.group_key
    }

    pub fn epoch(&self) -> u64 {
        self.public.epoch
    }
}
