//! Participant state machine for key generation and share refresh.

use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, Rng};

use super::transcript::{Complaint, EncryptedShare, KeygenTranscript, MaliciousDeclaration};
use super::{FrostError, GroupKey, KeyMaterial, ParticipantIndex, SessionContext, ThresholdParams};
use crate::group::{
    commitment_eval, derive_symmetric_key, hash_to_scalar, lagrange_coeff_at, poly_eval,
    random_scalar, Group, HashInput,
};

const POK_TAG: &str = "ice-frost/H/proof-of-knowledge";
const DLEQ_TAG: &str = "ice-frost/H/complaint";

/// Schnorr proof of knowledge `(R, μ)` of a discrete logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchnorrProof<G: Group> {
    pub commitment: G::Element,
    pub response: G::Scalar,
}

/// Proof `(A1, A2, z)` that `dhk = pk_l^{sk_i}` for the `sk_i` behind `pk_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DleqProof<G: Group> {
    pub a1: G::Element,
    pub a2: G::Element,
    pub z: G::Scalar,
}

/// Round-one broadcast `(C_i, σ_i, pk_i, τ_i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Round1Broadcast<G: Group> {
    pub commitments: Vec<G::Element>,
    pub coefficient_proof: SchnorrProof<G>,
    pub encryption_key: G::Element,
    pub encryption_key_proof: SchnorrProof<G>,
}

/// What the dealt polynomials share.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DealingMode<G: Group> {
    /// A fresh random secret.
    Fresh,
    /// Zero, plus each previous holder's Lagrange-weighted share, so the
    /// shared secret (and the group key) stays the same.
    Refresh {
        previous: GroupKey<G>,
        holders: BTreeSet<ParticipantIndex>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Round1,
    Round2,
    Done,
    Aborted,
}

/// Why a round-one broadcast was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum Round1Fault {
    #[error("commitment vector has {0} entries")]
    CommitmentLength(usize),
    #[error("proof of knowledge of the constant term is invalid")]
    CoefficientProof,
    #[error("proof of knowledge of the encryption key is invalid")]
    EncryptionKeyProof,
    #[error("a refresh dealer committed to a nonzero constant term")]
    NonzeroRefreshConstant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictReason {
    /// The accuser's own round-one broadcast is missing or invalid.
    AccuserDisqualified,
    /// The dealer's round-one broadcast is missing or invalid.
    DealerDisqualified,
    InvalidComplaintProof,
    ShareNotPublished,
    ShareUndecryptable,
    ShareIncorrect,
    ShareCorrect,
}

/// Outcome of adjudicating one complaint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub excluded: ParticipantIndex,
    pub reason: VerdictReason,
}

/// Result of checking an incoming encrypted share.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShareReceipt<G: Group> {
    Accepted,
    Complaint(Complaint<G>),
}

fn scalar_of<G: Group>(i: ParticipantIndex) -> G::Scalar {
    G::scalar_from_u64(i.into())
}

fn pok_challenge<G: Group>(
    index: ParticipantIndex,
    context: &SessionContext,
    public: &G::Element,
    commitment: &G::Element,
) -> G::Scalar {
    let data = HashInput::new()
        .index(index)
        .bytes(&context.to_bytes())
        .element::<G>(public)
        .element::<G>(commitment)
        .finish();
    hash_to_scalar::<G>(POK_TAG, &data)
}

fn prove_knowledge<G: Group, R: Rng + CryptoRng + ?Sized>(
    index: ParticipantIndex,
    context: &SessionContext,
    secret: &G::Scalar,
    public: &G::Element,
    rng: &mut R,
) -> SchnorrProof<G> {
    let k = random_scalar::<G, R>(rng);
    let commitment = G::mul_base(&k);
    let c = pok_challenge::<G>(index, context, public, &commitment);
    SchnorrProof {
        commitment,
        response: k + *secret * c,
    }
}

fn verify_knowledge<G: Group>(
    index: ParticipantIndex,
    context: &SessionContext,
    public: &G::Element,
    proof: &SchnorrProof<G>,
) -> bool {
    let c = pok_challenge::<G>(index, context, public, &proof.commitment);
    proof.commitment == G::mul_base(&proof.response) - *public * c
}

fn dleq_challenge<G: Group>(
    pk_accuser: &G::Element,
    pk_accused: &G::Element,
    dh: &G::Element,
    a1: &G::Element,
    a2: &G::Element,
) -> G::Scalar {
    let data = HashInput::new()
        .element::<G>(pk_accuser)
        .element::<G>(pk_accused)
        .element::<G>(dh)
        .element::<G>(a1)
        .element::<G>(a2)
        .finish();
    hash_to_scalar::<G>(DLEQ_TAG, &data)
}

/// Checks the two proofs of knowledge in a round-one broadcast.
pub fn verify_round1<G: Group>(
    payload: &Round1Broadcast<G>,
    sender: ParticipantIndex,
    context: &SessionContext,
    threshold: u32,
    mode: &DealingMode<G>,
) -> Result<(), Round1Fault> {
    if payload.commitments.len() != threshold as usize {
        return Err(Round1Fault::CommitmentLength(payload.commitments.len()));
    }
    let constant = payload.commitments[0];
    if matches!(mode, DealingMode::Refresh { .. }) && constant != G::identity() {
        return Err(Round1Fault::NonzeroRefreshConstant);
    }
    if !verify_knowledge::<G>(sender, context, &constant, &payload.coefficient_proof) {
        return Err(Round1Fault::CoefficientProof);
    }
    if !verify_knowledge::<G>(
        sender,
        context,
        &payload.encryption_key,
        &payload.encryption_key_proof,
    ) {
        return Err(Round1Fault::EncryptionKeyProof);
    }
    Ok(())
}

/// `g^{share}` that `dealer` must have sent to `recipient`.
pub(crate) fn expected_share_commitment<G: Group>(
    mode: &DealingMode<G>,
    dealer: ParticipantIndex,
    commitments: &[G::Element],
    recipient: ParticipantIndex,
) -> Result<G::Element, FrostError> {
    let x = scalar_of::<G>(recipient);
    let mut expected = commitment_eval::<G>(commitments, &x);
    if let DealingMode::Refresh { previous, holders } = mode {
        if holders.contains(&dealer) {
            let set: Vec<_> = holders.iter().copied().collect();
            let lambda = lagrange_coeff_at::<G>(&set, dealer, &x)?;
            let y = previous
                .verification_shares
                .get(&dealer)
                .ok_or(FrostError::MissingData(dealer))?;
            expected = expected + *y * lambda;
        }
    }
    Ok(expected)
}

fn verification_share_from<'a, G: Group>(
    mode: &DealingMode<G>,
    dealers: impl Iterator<Item = (ParticipantIndex, &'a [G::Element])>,
    holder: ParticipantIndex,
) -> Result<G::Element, FrostError> {
    let mut acc = G::identity();
    for (dealer, commitments) in dealers {
        acc = acc + expected_share_commitment::<G>(mode, dealer, commitments, holder)?;
    }
    Ok(acc)
}

/// `Y_i = Π_j Π_k φ_jk^{i^k}` over every non-excluded dealer on the board.
pub fn compute_verification_share<G: Group>(
    transcript: &KeygenTranscript<G>,
    excluded: &BTreeSet<ParticipantIndex>,
    holder: ParticipantIndex,
) -> Result<G::Element, FrostError> {
    let dealers = transcript
        .round1
        .iter()
        .filter(|(i, _)| transcript.participants.contains(i) && !excluded.contains(i))
        .map(|(i, r1)| (*i, r1.commitments.as_slice()));
    verification_share_from::<G>(&transcript.mode, dealers, holder)
}

/// Resolves a complaint from public data only.
///
/// The accuser is at fault when its DH proof fails or when the published
/// share turns out to be correct; otherwise the dealer is. A party whose
/// round-one broadcast does not verify is blamed before anything else.
pub fn adjudicate_complaint<G: Group>(
    transcript: &KeygenTranscript<G>,
    complaint: &Complaint<G>,
) -> Verdict {
    let accuser = complaint.accuser;
    let dealer = complaint.accused;
    let blame = |excluded, reason| Verdict { excluded, reason };

    let valid = |i: ParticipantIndex| {
        transcript.round1.get(&i).filter(|r1| {
            transcript.participants.contains(&i)
                && verify_round1(
                    r1,
                    i,
                    &transcript.context,
                    transcript.params.threshold,
                    &transcript.mode,
                )
                .is_ok()
        })
    };
    let Some(accuser_r1) = valid(accuser) else {
        return blame(accuser, VerdictReason::AccuserDisqualified);
    };
    let Some(dealer_r1) = valid(dealer) else {
        return blame(dealer, VerdictReason::DealerDisqualified);
    };
    let pk_i = accuser_r1.encryption_key;
    let pk_l = dealer_r1.encryption_key;
    let dh = complaint.revealed_dh;
    let DleqProof { a1, a2, z } = complaint.proof;
    let h = dleq_challenge::<G>(&pk_i, &pk_l, &dh, &a1, &a2);
    if a1 + pk_i * h != G::mul_base(&z) || a2 + dh * h != pk_l * z {
        return blame(accuser, VerdictReason::InvalidComplaintProof);
    }

    let Some(entry) = transcript.share(dealer, accuser) else {
        return blame(dealer, VerdictReason::ShareNotPublished);
    };
    let key = derive_symmetric_key::<G>(&dh);
    let Some(delta) = key
        .decrypt(&entry.ciphertext)
        .ok()
        .and_then(|pt| G::decode_scalar(&pt).ok())
    else {
        return blame(dealer, VerdictReason::ShareUndecryptable);
    };
    match expected_share_commitment::<G>(
        &transcript.mode,
        dealer,
        &dealer_r1.commitments,
        accuser,
    ) {
        Ok(expected) if expected == G::mul_base(&delta) => {
            blame(accuser, VerdictReason::ShareCorrect)
        }
        _ => blame(dealer, VerdictReason::ShareIncorrect),
    }
}

/// One participant's view of a key generation or refresh session.
#[derive(Debug, Clone)]
pub struct KeygenSession<G: Group> {
    my_index: ParticipantIndex,
    params: ThresholdParams,
    context: SessionContext,
    mode: DealingMode<G>,
    participants: BTreeSet<ParticipantIndex>,
    recipients: BTreeSet<ParticipantIndex>,
    coeffs: Vec<G::Scalar>,
    /// Previous signing share, for refresh dealers that held one.
    base_share: Option<G::Scalar>,
    eph_sk: G::Scalar,
    eph_pk: G::Element,
    commitments: BTreeMap<ParticipantIndex, Vec<G::Element>>,
    encryption_keys: BTreeMap<ParticipantIndex, G::Element>,
    shares_received: BTreeMap<ParticipantIndex, G::Scalar>,
    excluded: BTreeSet<ParticipantIndex>,
    phase: Phase,
    emitted: bool,
}

impl<G: Group> KeygenSession<G> {
    /// Fresh key generation among `participants`, each of whom deals and
    /// receives.
    pub fn new<R: Rng + CryptoRng + ?Sized>(
        params: ThresholdParams,
        my_index: ParticipantIndex,
        participants: &BTreeSet<ParticipantIndex>,
        context: SessionContext,
        rng: &mut R,
    ) -> Result<Self, FrostError> {
        if participants.len() != params.participants as usize {
            return Err(FrostError::InvalidParameters {
                threshold: params.threshold,
                participants: participants.len() as u32,
            });
        }
        let coeffs = (0..params.threshold)
            .map(|_| random_scalar::<G, R>(rng))
            .collect();
        Self::build(
            params,
            my_index,
            participants.clone(),
            participants.clone(),
            context,
            DealingMode::Fresh,
            coeffs,
            None,
            rng,
        )
    }

    /// Refresh or reshare an existing key towards `new_members`.
    ///
    /// `holders` are the previous share holders that take part as dealers;
    /// `old_share` must be present exactly when `my_index` is one of them.
    #[allow(clippy::too_many_arguments)]
    pub fn new_refresh<R: Rng + CryptoRng + ?Sized>(
        params: ThresholdParams,
        my_index: ParticipantIndex,
        previous: GroupKey<G>,
        holders: &BTreeSet<ParticipantIndex>,
        new_members: &BTreeSet<ParticipantIndex>,
        old_share: Option<G::Scalar>,
        context: SessionContext,
        rng: &mut R,
    ) -> Result<Self, FrostError> {
        if new_members.len() != params.participants as usize
            || holders.len() < previous.threshold as usize
        {
            return Err(FrostError::InvalidParameters {
                threshold: params.threshold,
                participants: new_members.len() as u32,
            });
        }
        if holders.contains(&my_index) != old_share.is_some() {
            return Err(FrostError::MissingData(my_index));
        }
        if holders.iter().any(|h| !previous.verification_shares.contains_key(h)) {
            return Err(FrostError::InvalidIndex);
        }
        let mut coeffs = vec![G::zero()];
        coeffs.extend((1..params.threshold).map(|_| random_scalar::<G, R>(rng)));
        let participants = holders.union(new_members).copied().collect();
        Self::build(
            params,
            my_index,
            participants,
            new_members.clone(),
            context,
            DealingMode::Refresh {
                previous,
                holders: holders.clone(),
            },
            coeffs,
            old_share,
            rng,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn build<R: Rng + CryptoRng + ?Sized>(
        params: ThresholdParams,
        my_index: ParticipantIndex,
        participants: BTreeSet<ParticipantIndex>,
        recipients: BTreeSet<ParticipantIndex>,
        context: SessionContext,
        mode: DealingMode<G>,
        coeffs: Vec<G::Scalar>,
        base_share: Option<G::Scalar>,
        rng: &mut R,
    ) -> Result<Self, FrostError> {
        if my_index == 0 || participants.contains(&0) || !participants.contains(&my_index) {
            return Err(FrostError::InvalidIndex);
        }
        let eph_sk = random_scalar::<G, R>(rng);
        Ok(Self {
            my_index,
            params,
            context,
            mode,
            participants,
            recipients,
            coeffs,
            base_share,
            eph_sk,
            eph_pk: G::mul_base(&eph_sk),
            commitments: BTreeMap::new(),
            encryption_keys: BTreeMap::new(),
            shares_received: BTreeMap::new(),
            excluded: BTreeSet::new(),
            phase: Phase::Round1,
            emitted: false,
        })
    }

    pub fn index(&self) -> ParticipantIndex {
        self.my_index
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn excluded(&self) -> &BTreeSet<ParticipantIndex> {
        &self.excluded
    }

    pub fn mode(&self) -> &DealingMode<G> {
        &self.mode
    }

    pub fn is_recipient(&self) -> bool {
        self.recipients.contains(&self.my_index)
    }

    fn require(&self, phase: Phase) -> Result<(), FrostError> {
        if self.phase == phase {
            Ok(())
        } else {
            Err(FrostError::WrongPhase(self.phase))
        }
    }

    /// Emits the commitment vector and both proofs of knowledge.
    pub fn round1<R: Rng + CryptoRng + ?Sized>(
        &mut self,
        rng: &mut R,
    ) -> Result<Round1Broadcast<G>, FrostError> {
        self.require(Phase::Round1)?;
        if self.emitted {
            return Err(FrostError::AlreadyEmitted);
        }
        let commitments: Vec<_> = self.coeffs.iter().map(G::mul_base).collect();
        let coefficient_proof = prove_knowledge::<G, R>(
            self.my_index,
            &self.context,
            &self.coeffs[0],
            &commitments[0],
            rng,
        );
        let encryption_key_proof =
            prove_knowledge::<G, R>(self.my_index, &self.context, &self.eph_sk, &self.eph_pk, rng);
        self.commitments.insert(self.my_index, commitments.clone());
        self.encryption_keys.insert(self.my_index, self.eph_pk);
        self.emitted = true;
        Ok(Round1Broadcast {
            commitments,
            coefficient_proof,
            encryption_key: self.eph_pk,
            encryption_key_proof,
        })
    }

    /// Verifies a peer's round-one broadcast; a failure excludes the sender
    /// and yields the `(malicious, sender)` declaration to publish.
    pub fn receive_round1(
        &mut self,
        sender: ParticipantIndex,
        payload: &Round1Broadcast<G>,
    ) -> Result<(), MaliciousDeclaration> {
        if sender == self.my_index
            || !self.participants.contains(&sender)
            || self.phase != Phase::Round1
        {
            return Ok(());
        }
        match verify_round1(
            payload,
            sender,
            &self.context,
            self.params.threshold,
            &self.mode,
        ) {
            Ok(()) => {
                self.commitments.insert(sender, payload.commitments.clone());
                self.encryption_keys.insert(sender, payload.encryption_key);
                Ok(())
            }
            Err(_) => {
                self.excluded.insert(sender);
                Err(MaliciousDeclaration {
                    reporter: self.my_index,
                    accused: sender,
                })
            }
        }
    }

    fn remaining_recipients(&self) -> usize {
        self.recipients.difference(&self.excluded).count()
    }

    fn check_floor(&mut self) -> Result<(), FrostError> {
        let remaining = self.remaining_recipients();
        if remaining < self.params.abort_floor as usize {
            self.phase = Phase::Aborted;
            return Err(FrostError::Aborted {
                remaining,
                floor: self.params.abort_floor,
            });
        }
        Ok(())
    }

    /// Closes round one: silent participants are excluded, then the abort
    /// floor is checked.
    pub fn end_round1(&mut self) -> Result<(), FrostError> {
        self.require(Phase::Round1)?;
        if !self.emitted {
            return Err(FrostError::MissingData(self.my_index));
        }
        let silent: Vec<_> = self
            .participants
            .iter()
            .filter(|p| !self.commitments.contains_key(p))
            .copied()
            .collect();
        self.excluded.extend(silent);
        self.check_floor()?;
        self.phase = Phase::Round2;
        if self.is_recipient() {
            let own = self.share_for(self.my_index)?;
            self.shares_received.insert(self.my_index, own);
        }
        Ok(())
    }

    /// `f_i(l)`, plus the Lagrange-weighted previous share when refreshing.
    pub(crate) fn share_for(&self, recipient: ParticipantIndex) -> Result<G::Scalar, FrostError> {
        let x = scalar_of::<G>(recipient);
        let mut value = poly_eval::<G>(&self.coeffs, &x);
        if let (DealingMode::Refresh { holders, .. }, Some(s)) = (&self.mode, self.base_share) {
            let set: Vec<_> = holders.iter().copied().collect();
            value = value + lagrange_coeff_at::<G>(&set, self.my_index, &x)? * s;
        }
        Ok(value)
    }

    fn pair_key(&self, peer: ParticipantIndex) -> Result<G::Element, FrostError> {
        let pk = self
            .encryption_keys
            .get(&peer)
            .ok_or(FrostError::MissingData(peer))?;
        Ok(*pk * self.eph_sk)
    }

    pub(crate) fn encrypt_share_value<R: Rng + CryptoRng + ?Sized>(
        &self,
        recipient: ParticipantIndex,
        value: &G::Scalar,
        rng: &mut R,
    ) -> Result<EncryptedShare, FrostError> {
        let key = derive_symmetric_key::<G>(&self.pair_key(recipient)?);
        Ok(EncryptedShare {
            dealer: self.my_index,
            recipient,
            ciphertext: key.encrypt(rng, &G::encode_scalar(value)),
        })
    }

    /// `((i, l), Enc_{k_il}(f_i(l)))`.
    pub fn round2_send<R: Rng + CryptoRng + ?Sized>(
        &self,
        recipient: ParticipantIndex,
        rng: &mut R,
    ) -> Result<EncryptedShare, FrostError> {
        self.require(Phase::Round2)?;
        if recipient == self.my_index || !self.recipients.contains(&recipient) {
            return Err(FrostError::InvalidIndex);
        }
        if self.excluded.contains(&recipient) {
            return Err(FrostError::Excluded(recipient));
        }
        let value = self.share_for(recipient)?;
        self.encrypt_share_value(recipient, &value, rng)
    }

    /// Decrypts and checks a share addressed to us.
    pub fn round2_receive<R: Rng + CryptoRng + ?Sized>(
        &mut self,
        share: &EncryptedShare,
        rng: &mut R,
    ) -> Result<ShareReceipt<G>, FrostError> {
        self.require(Phase::Round2)?;
        let dealer = share.dealer;
        if share.recipient != self.my_index || dealer == self.my_index {
            return Err(FrostError::InvalidIndex);
        }
        if self.excluded.contains(&dealer) {
            return Err(FrostError::Excluded(dealer));
        }
        let commitments = self
            .commitments
            .get(&dealer)
            .ok_or(FrostError::MissingData(dealer))?;
        let key = derive_symmetric_key::<G>(&self.pair_key(dealer)?);
        let delta = key
            .decrypt(&share.ciphertext)
            .ok()
            .and_then(|pt| G::decode_scalar(&pt).ok());
        let expected =
            expected_share_commitment::<G>(&self.mode, dealer, commitments, self.my_index)?;
        match delta {
            Some(d) if G::mul_base(&d) == expected => {
                self.shares_received.insert(dealer, d);
                Ok(ShareReceipt::Accepted)
            }
            _ => Ok(ShareReceipt::Complaint(self.complain_about(dealer, rng)?)),
        }
    }

    /// Builds a complaint against `dealer`, revealing `dhk = pk_l^{sk_i}`
    /// with a proof that it is well-formed.
    pub fn complain_about<R: Rng + CryptoRng + ?Sized>(
        &self,
        dealer: ParticipantIndex,
        rng: &mut R,
    ) -> Result<Complaint<G>, FrostError> {
        let pk_l = *self
            .encryption_keys
            .get(&dealer)
            .ok_or(FrostError::MissingData(dealer))?;
        let dh = pk_l * self.eph_sk;
        let r = random_scalar::<G, R>(rng);
        let a1 = G::mul_base(&r);
        let a2 = pk_l * r;
        let h = dleq_challenge::<G>(&self.eph_pk, &pk_l, &dh, &a1, &a2);
        Ok(Complaint {
            accuser: self.my_index,
            accused: dealer,
            revealed_dh: dh,
            proof: DleqProof {
                a1,
                a2,
                z: r + h * self.eph_sk,
            },
        })
    }

    /// Dealers we still expect a share from.
    pub fn pending_dealers(&self) -> Vec<ParticipantIndex> {
        self.participants
            .iter()
            .filter(|d| !self.excluded.contains(d) && !self.shares_received.contains_key(d))
            .copied()
            .collect()
    }

    pub fn apply_verdict(&mut self, verdict: &Verdict) {
        self.excluded.insert(verdict.excluded);
        self.shares_received.remove(&verdict.excluded);
    }

    /// Derives `s_i`, every `Y_j` and `Y`, then erases the per-dealer shares.
    pub fn finalize(&mut self) -> Result<KeyMaterial<G>, FrostError> {
        self.require(Phase::Round2)?;
        if self.excluded.contains(&self.my_index) {
            self.phase = Phase::Aborted;
            return Err(FrostError::Excluded(self.my_index));
        }
        if let DealingMode::Refresh { holders, .. } = &self.mode {
            let lost: BTreeSet<_> = holders.intersection(&self.excluded).copied().collect();
            if !lost.is_empty() {
                self.phase = Phase::Aborted;
                return Err(FrostError::RefreshDealerExcluded(lost));
            }
        }
        self.check_floor()?;
        if !self.is_recipient() {
            return Err(FrostError::InvalidIndex);
        }
        let dealers: Vec<_> = self.participants.difference(&self.excluded).copied().collect();
        let mut share = G::zero();
        for d in &dealers {
            share = share
                + *self
                    .shares_received
                    .get(d)
                    .ok_or(FrostError::MissingData(*d))?;
        }
        let group_key = match &self.mode {
            DealingMode::Fresh => dealers
                .iter()
                .fold(G::identity(), |acc, d| acc + self.commitments[d][0]),
            DealingMode::Refresh { previous, .. } => previous.group_key,
        };
        let mut verification_shares = BTreeMap::new();
        for holder in self.recipients.difference(&self.excluded) {
            let y = verification_share_from::<G>(
                &self.mode,
                dealers
                    .iter()
                    .map(|d| (*d, self.commitments[d].as_slice())),
                *holder,
            )?;
            verification_shares.insert(*holder, y);
        }
        debug_assert_eq!(verification_shares[&self.my_index], G::mul_base(&share));
        self.shares_received.clear();
        for c in &mut self.coeffs {
            *c = G::zero();
        }
        self.phase = Phase::Done;
        Ok(KeyMaterial {
            index: self.my_index,
            signing_share: share,
            public: GroupKey {
                group_key,
                threshold: self.params.threshold,
                epoch: self.context.epoch,
                verification_shares,
            },
        })
    }
}
