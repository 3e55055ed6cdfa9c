//! In-process drivers that run every participant of a session against a
//! shared bulletin board, with optional scripted misbehavior.

use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, Rng};

use super::keygen::{adjudicate_complaint, KeygenSession, ShareReceipt, Verdict};
use super::sign::{SignatureAggregator, SigningSession, ThresholdSignature};
use super::transcript::{EncryptedShare, KeygenTranscript};
use super::{FrostError, GroupKey, KeyMaterial, ParticipantIndex, SessionContext, ThresholdParams};
use crate::group::Group;

/// Scripted misbehavior of one key generation participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeygenFault {
    /// Sends nothing in round one.
    Silent,
    /// Publishes a proof of knowledge with a perturbed response.
    BadProofOfKnowledge,
    /// Sends `f_i(l) + 1` to `l`.
    BadShare(ParticipantIndex),
    /// Sends random bytes to `l`.
    GarbledShare(ParticipantIndex),
    /// Never publishes the share for `l`.
    WithheldShare(ParticipantIndex),
    /// Complains about `l` with an invalid DH proof.
    BogusComplaint(ParticipantIndex),
    /// Complains about `l` with a valid DH proof although the share was fine.
    FalseComplaint(ParticipantIndex),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigningFault {
    /// Sends `z_i + 1`.
    BadResponse,
    /// Commits to nonces but never responds.
    Withhold,
}

#[derive(Debug, Clone)]
pub struct KeygenOutcome<G: Group> {
    pub keys: BTreeMap<ParticipantIndex, KeyMaterial<G>>,
    pub public: GroupKey<G>,
    pub excluded: BTreeSet<ParticipantIndex>,
    pub verdicts: Vec<Verdict>,
    pub transcript: KeygenTranscript<G>,
    /// Number of sessions run; refreshes restart when a dealer holding a
    /// previous share is excluded.
    pub sessions: u32,
}

#[derive(Debug, Clone)]
pub struct SigningOutcome<G: Group> {
    pub signature: ThresholdSignature<G>,
    pub signers: BTreeSet<ParticipantIndex>,
    pub excluded: BTreeSet<ParticipantIndex>,
    pub attempts: u32,
}

/// Fresh key generation among `1..=n`.
pub fn run_keygen<G: Group, R: Rng + CryptoRng + ?Sized>(
    params: ThresholdParams,
    context: SessionContext,
    faults: &BTreeMap<ParticipantIndex, KeygenFault>,
    rng: &mut R,
) -> Result<KeygenOutcome<G>, FrostError> {
    let all: BTreeSet<_> = (1..=params.participants).collect();
    let mut sessions = BTreeMap::new();
    for i in &all {
        sessions.insert(*i, KeygenSession::<G>::new(params, *i, &all, context.clone(), rng)?);
    }
    drive(sessions, params, context, faults, rng)
}

/// Re-shares the key held by `previous` towards `new_members`, keeping the
/// group key fixed. The epoch of `context` is set to the previous epoch plus
/// one. If a dealer holding a previous share is excluded the session is
/// restarted without it under the next session id.
pub fn run_refresh<G: Group, R: Rng + CryptoRng + ?Sized>(
    params: ThresholdParams,
    context: SessionContext,
    previous: &BTreeMap<ParticipantIndex, KeyMaterial<G>>,
    new_members: &BTreeSet<ParticipantIndex>,
    faults: &BTreeMap<ParticipantIndex, KeygenFault>,
    rng: &mut R,
) -> Result<KeygenOutcome<G>, FrostError> {
    let public = previous
        .values()
        .next()
        .map(|k| k.public.clone())
        .ok_or(FrostError::TooFewSigners { have: 0, need: 1 })?;
    let mut holders: BTreeSet<_> = previous.keys().copied().collect();
    let mut context = SessionContext {
        epoch: public.epoch + 1,
        ..context
    };
    let mut faults = faults.clone();
    let mut restarts = 0;
    loop {
        if holders.len() < public.threshold as usize {
            return Err(FrostError::TooFewSigners {
                have: holders.len(),
                need: public.threshold,
            });
        }
        let mut sessions = BTreeMap::new();
        for i in holders.union(new_members) {
            let old = holders.contains(i).then(|| previous[i].signing_share);
            sessions.insert(
                *i,
                KeygenSession::new_refresh(
                    params,
                    *i,
                    public.clone(),
                    &holders,
                    new_members,
                    old,
                    context.clone(),
                    rng,
                )?,
            );
        }
        match drive(sessions, params, context.clone(), &faults, rng) {
            Err(FrostError::RefreshDealerExcluded(lost)) => {
                for l in &lost {
                    holders.remove(l);
                    faults.remove(l);
                }
                context.session_id += 1;
                restarts += 1;
            }
            Ok(mut outcome) => {
                outcome.sessions += restarts;
                return Ok(outcome);
            }
            Err(e) => return Err(e),
        }
    }
}

fn drive<G: Group, R: Rng + CryptoRng + ?Sized>(
    mut sessions: BTreeMap<ParticipantIndex, KeygenSession<G>>,
    params: ThresholdParams,
    context: SessionContext,
    faults: &BTreeMap<ParticipantIndex, KeygenFault>,
    rng: &mut R,
) -> Result<KeygenOutcome<G>, FrostError> {
    let participants: BTreeSet<_> = sessions.keys().copied().collect();
    let recipients: BTreeSet<_> = sessions
        .values()
        .filter(|s| s.is_recipient())
        .map(|s| s.index())
        .collect();
    let mode = sessions
        .values()
        .next()
        .ok_or(FrostError::InvalidIndex)?
        .mode()
        .clone();
    let mut board =
        KeygenTranscript::new(context, params, mode, participants.clone(), recipients.clone());

    // Round one.
    for (i, s) in sessions.iter_mut() {
        let mut payload = s.round1(rng)?;
        match faults.get(i) {
            Some(KeygenFault::Silent) => continue,
            Some(KeygenFault::BadProofOfKnowledge) => {
                payload.coefficient_proof.response = payload.coefficient_proof.response + G::one();
            }
            _ => {}
        }
        board.publish_round1(*i, payload);
    }
    let round1: Vec<_> = board.round1.iter().map(|(i, p)| (*i, p.clone())).collect();
    for s in sessions.values_mut() {
        for (sender, payload) in &round1 {
            if let Err(d) = s.receive_round1(*sender, payload) {
                board.declare_malicious(d.reporter, d.accused);
            }
        }
    }
    for s in sessions.values_mut() {
        s.end_round1()?;
    }

    // Round two: dealers publish encrypted shares.
    for (i, s) in &sessions {
        if s.excluded().contains(i) || !board.round1.contains_key(i) {
            continue;
        }
        for l in recipients.iter().filter(|l| *l != i && !s.excluded().contains(l)) {
            let fault = faults.get(i).copied();
            let share = match fault {
                Some(KeygenFault::WithheldShare(v)) if v == *l => continue,
                Some(KeygenFault::BadShare(v)) if v == *l => {
                    let wrong = s.share_for(*l)? + G::one();
                    s.encrypt_share_value(*l, &wrong, rng)?
                }
                Some(KeygenFault::GarbledShare(v)) if v == *l => {
                    let mut junk = vec![0u8; 12 + G::SCALAR_LEN + 16];
                    rng.fill_bytes(&mut junk);
                    EncryptedShare {
                        dealer: *i,
                        recipient: *l,
                        ciphertext: junk,
                    }
                }
                _ => s.round2_send(*l, rng)?,
            };
            board.publish_share(share);
        }
    }

    // Recipients check what was published to them and complain.
    for (i, s) in sessions.iter_mut() {
        if !s.is_recipient() || s.excluded().contains(i) {
            continue;
        }
        for dealer in s.pending_dealers() {
            let complaint = match board.share(dealer, *i).cloned() {
                Some(entry) => match s.round2_receive(&entry, rng)? {
                    ShareReceipt::Accepted => None,
                    ShareReceipt::Complaint(c) => Some(c),
                },
                None => Some(s.complain_about(dealer, rng)?),
            };
            if let Some(c) = complaint {
                board.publish_complaint(c);
            }
        }
        match faults.get(i) {
            Some(KeygenFault::FalseComplaint(l)) if participants.contains(l) => {
                board.publish_complaint(s.complain_about(*l, rng)?);
            }
            Some(KeygenFault::BogusComplaint(l)) if participants.contains(l) => {
                let mut c = s.complain_about(*l, rng)?;
                c.proof.z = c.proof.z + G::one();
                board.publish_complaint(c);
            }
            _ => {}
        }
    }

    // Every participant adjudicates every complaint from the public board.
    let verdicts: Vec<_> = board
        .complaints
        .iter()
        .map(|c| adjudicate_complaint(&board, c))
        .collect();
    for s in sessions.values_mut() {
        for v in &verdicts {
            s.apply_verdict(v);
        }
    }
    for v in &verdicts {
        board.declare_malicious(0, v.excluded);
    }

    // Scripted participants are not trusted to agree; every honest view
    // must be the same.
    let mut excluded_views = sessions
        .iter()
        .filter(|(i, _)| !faults.contains_key(i))
        .map(|(_, s)| s.excluded().clone());
    let excluded = excluded_views.next().unwrap_or_default();
    if excluded_views.any(|v| v != excluded) {
        return Err(FrostError::Transcript(
            "participants disagree on the excluded set".into(),
        ));
    }
    let mut keys = BTreeMap::new();
    for (i, s) in sessions.iter_mut() {
        if !s.is_recipient() || excluded.contains(i) {
            continue;
        }
        let k = s.finalize()?;
        board.announce_group_key(*i, k.public.group_key);
        keys.insert(*i, k);
    }
    let public = keys
        .values()
        .next()
        .map(|k| k.public.clone())
        .ok_or(FrostError::Aborted {
            remaining: 0,
            floor: params.abort_floor,
        })?;
    if keys.values().any(|k| k.public != public) {
        return Err(FrostError::Transcript(
            "participants derived different public keys".into(),
        ));
    }
    Ok(KeygenOutcome {
        keys,
        public,
        excluded,
        verdicts,
        transcript: board,
        sessions: 1,
    })
}

/// Signs `message` with `signers`, excluding and retrying on bad or missing
/// responses until a signature verifies or fewer than `t` signers remain.
pub fn run_signing<G: Group, R: Rng + CryptoRng + ?Sized>(
    keys: &BTreeMap<ParticipantIndex, KeyMaterial<G>>,
    signers: &BTreeSet<ParticipantIndex>,
    message: &[u8],
    faults: &BTreeMap<ParticipantIndex, SigningFault>,
    rng: &mut R,
) -> Result<SigningOutcome<G>, FrostError> {
    let mut active = signers.clone();
    let mut excluded = BTreeSet::new();
    let mut attempts = 0;
    loop {
        attempts += 1;
        let public = &keys
            .get(active.iter().next().ok_or(FrostError::TooFewSigners {
                have: 0,
                need: 1,
            })?)
            .ok_or(FrostError::NotASigner(0))?
            .public;
        if active.len() < public.threshold as usize {
            return Err(FrostError::TooFewSigners {
                have: active.len(),
                need: public.threshold,
            });
        }
        let mut sessions = Vec::new();
        for i in &active {
            let key = keys.get(i).ok_or(FrostError::NotASigner(*i))?;
            sessions.push(SigningSession::new(key.clone(), message));
        }
        let mut commitments = Vec::new();
        for s in &mut sessions {
            commitments.push(s.commit(rng)?);
        }
        let aggregator = SignatureAggregator::new(public, message, &commitments)?;
        let mut shares = Vec::new();
        for s in &mut sessions {
            let mut share = s.sign(&commitments)?;
            match faults.get(&s.index()) {
                Some(SigningFault::Withhold) => continue,
                Some(SigningFault::BadResponse) => share.response = share.response + G::one(),
                None => {}
            }
            shares.push(share);
        }
        match aggregator.aggregate(&shares) {
            Ok(signature) => {
                return Ok(SigningOutcome {
                    signature,
                    signers: active,
                    excluded,
                    attempts,
                })
            }
            Err(FrostError::InvalidResponses(bad)) => {
                for b in bad {
                    active.remove(&b);
                    excluded.insert(b);
                }
            }
            Err(e) => return Err(e),
        }
    }
}
