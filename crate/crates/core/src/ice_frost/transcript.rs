use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::keygen::{DealingMode, DleqProof, Round1Broadcast, SchnorrProof};
use super::{FrostError, GroupKey, ParticipantIndex, SessionContext, ThresholdParams};
use crate::group::{element_from_hex, element_hex, scalar_from_hex, scalar_hex, Group};

/// `((dealer, recipient), e)` as published in round two.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedShare {
    pub dealer: ParticipantIndex,
    pub recipient: ParticipantIndex,
    pub ciphertext: Vec<u8>,
}

/// `(complaint, accuser, accused, dhk, π)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Complaint<G: Group> {
    pub accuser: ParticipantIndex,
    pub accused: ParticipantIndex,
    pub revealed_dh: G::Element,
    pub proof: DleqProof<G>,
}

/// `(malicious, accused)` broadcast by `reporter`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MaliciousDeclaration {
    pub reporter: ParticipantIndex,
    pub accused: ParticipantIndex,
}

/// The public bulletin board of one key generation (or refresh) session.
///
/// Everything an outside verifier needs to replay round-one checks and
/// complaint adjudication lives here.
#[derive(Debug, Clone)]
pub struct KeygenTranscript<G: Group> {
    pub context: SessionContext,
    pub params: ThresholdParams,
    pub mode: DealingMode<G>,
    pub participants: BTreeSet<ParticipantIndex>,
    pub recipients: BTreeSet<ParticipantIndex>,
    pub round1: BTreeMap<ParticipantIndex, Round1Broadcast<G>>,
    pub shares: BTreeMap<(ParticipantIndex, ParticipantIndex), EncryptedShare>,
    pub complaints: Vec<Complaint<G>>,
    pub declarations: Vec<MaliciousDeclaration>,
    pub announced_keys: BTreeMap<ParticipantIndex, G::Element>,
}

impl<G: Group> KeygenTranscript<G> {
    pub fn new(
        context: SessionContext,
        params: ThresholdParams,
        mode: DealingMode<G>,
        participants: BTreeSet<ParticipantIndex>,
        recipients: BTreeSet<ParticipantIndex>,
    ) -> Self {
        Self {
            context,
            params,
            mode,
            participants,
            recipients,
            round1: BTreeMap::new(),
            shares: BTreeMap::new(),
            complaints: Vec::new(),
            declarations: Vec::new(),
            announced_keys: BTreeMap::new(),
        }
    }

    pub fn publish_round1(&mut self, sender: ParticipantIndex, payload: Round1Broadcast<G>) {
        self.round1.insert(sender, payload);
    }

    pub fn publish_share(&mut self, share: EncryptedShare) {
        self.shares.insert((share.dealer, share.recipient), share);
    }

    pub fn publish_complaint(&mut self, complaint: Complaint<G>) {
        self.complaints.push(complaint);
    }

    pub fn declare_malicious(&mut self, reporter: ParticipantIndex, accused: ParticipantIndex) {
        let d = MaliciousDeclaration { reporter, accused };
        if !self.declarations.contains(&d) {
            self.declarations.push(d);
        }
    }

    pub fn announce_group_key(&mut self, sender: ParticipantIndex, key: G::Element) {
        self.announced_keys.insert(sender, key);
    }

    pub fn share(
        &self,
        dealer: ParticipantIndex,
        recipient: ParticipantIndex,
    ) -> Option<&EncryptedShare> {
        self.shares.get(&(dealer, recipient))
    }

    /// One JSON object per line: context, dealing mode, then every broadcast
    /// in publication class order.
    pub fn to_jsonl(&self) -> String {
        self.records()
            .iter()
            .map(|r| serde_json::to_string(r).expect("transcript records serialize"))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }

    fn records(&self) -> Vec<TranscriptRecord> {
        let mut out = vec![TranscriptRecord::Context {
            group: G::NAME.to_string(),
            context: self.context.clone(),
            params: self.params,
            participants: self.participants.iter().copied().collect(),
            recipients: self.recipients.iter().copied().collect(),
        }];
        if let DealingMode::Refresh { previous, holders } = &self.mode {
            out.push(TranscriptRecord::RefreshBase {
                group_key: element_hex::<G>(&previous.group_key),
                threshold: previous.threshold,
                epoch: previous.epoch,
                holders: holders.iter().copied().collect(),
                verification_shares: previous
                    .verification_shares
                    .iter()
                    .map(|(i, e)| (*i, element_hex::<G>(e)))
                    .collect(),
            });
        }
        for (sender, r1) in &self.round1 {
            out.push(TranscriptRecord::Round1 {
                sender: *sender,
                commitments: r1.commitments.iter().map(element_hex::<G>).collect(),
                coefficient_proof: ProofRecord::from_proof(&r1.coefficient_proof),
                encryption_key: element_hex::<G>(&r1.encryption_key),
                encryption_key_proof: ProofRecord::from_proof(&r1.encryption_key_proof),
            });
        }
        for share in self.shares.values() {
            out.push(TranscriptRecord::Share {
                dealer: share.dealer,
                recipient: share.recipient,
                ciphertext: hex::encode(&share.ciphertext),
            });
        }
        for c in &self.complaints {
            out.push(TranscriptRecord::Complaint {
                accuser: c.accuser,
                accused: c.accused,
                revealed_dh: element_hex::<G>(&c.revealed_dh),
                a1: element_hex::<G>(&c.proof.a1),
                a2: element_hex::<G>(&c.proof.a2),
                z: scalar_hex::<G>(&c.proof.z),
            });
        }
        for d in &self.declarations {
            out.push(TranscriptRecord::Malicious {
                reporter: d.reporter,
                accused: d.accused,
            });
        }
        for (sender, key) in &self.announced_keys {
            out.push(TranscriptRecord::GroupKey {
                sender: *sender,
                key: element_hex::<G>(key),
            });
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, FrostError> {
        let bad = |m: String| FrostError::Transcript(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first: TranscriptRecord = serde_json::from_str(
            lines.next().ok_or_else(|| bad("empty transcript".into()))?,
        )
        .map_err(|e| bad(e.to_string()))?;
        let TranscriptRecord::Context {
            group,
            context,
            params,
            participants,
            recipients,
        } = first
        else {
            return Err(bad("first record must be the context".into()));
        };
        if group != G::NAME {
            return Err(bad(format!("transcript is for group {group}")));
        }
        let mut t = KeygenTranscript::new(
            context,
            params,
            DealingMode::Fresh,
            participants.into_iter().collect(),
            recipients.into_iter().collect(),
        );
        for line in lines {
            let rec: TranscriptRecord =
                serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            match rec {
                TranscriptRecord::Context { .. } => {
                    return Err(bad("duplicate context record".into()))
                }
                TranscriptRecord::RefreshBase {
                    group_key,
                    threshold,
                    epoch,
                    holders,
                    verification_shares,
                } => {
                    let mut shares = BTreeMap::new();
                    for (i, h) in verification_shares {
                        shares.insert(i, element_from_hex::<G>(&h)?);
                    }
                    t.mode = DealingMode::Refresh {
                        previous: GroupKey {
                            group_key: element_from_hex::<G>(&group_key)?,
                            threshold,
                            epoch,
                            verification_shares: shares,
                        },
                        holders: holders.into_iter().collect(),
                    };
                }
                TranscriptRecord::Round1 {
                    sender,
                    commitments,
                    coefficient_proof,
                    encryption_key,
                    encryption_key_proof,
                } => {
                    let commitments = commitments
                        .iter()
                        .map(|c| element_from_hex::<G>(c))
                        .collect::<Result<Vec<_>, _>>()?;
                    t.publish_round1(
                        sender,
                        Round1Broadcast {
                            commitments,
                            coefficient_proof: coefficient_proof.to_proof::<G>()?,
                            encryption_key: element_from_hex::<G>(&encryption_key)?,
                            encryption_key_proof: encryption_key_proof.to_proof::<G>()?,
                        },
                    );
                }
                TranscriptRecord::Share {
                    dealer,
                    recipient,
                    ciphertext,
                } => t.publish_share(EncryptedShare {
                    dealer,
                    recipient,
                    ciphertext: hex::decode(ciphertext).map_err(|e| bad(e.to_string()))?,
                }),
                TranscriptRecord::Complaint {
                    accuser,
                    accused,
                    revealed_dh,
                    a1,
                    a2,
                    z,
                } => t.publish_complaint(Complaint {
                    accuser,
                    accused,
                    revealed_dh: element_from_hex::<G>(&revealed_dh)?,
                    proof: DleqProof {
                        a1: element_from_hex::<G>(&a1)?,
                        a2: element_from_hex::<G>(&a2)?,
                        z: scalar_from_hex::<G>(&z)?,
                    },
                }),
                TranscriptRecord::Malicious { reporter, accused } => {
                    t.declare_malicious(reporter, accused)
                }
                TranscriptRecord::GroupKey { sender, key } => {
                    t.announce_group_key(sender, element_from_hex::<G>(&key)?)
                }
            }
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProofRecord {
    commitment: String,
    response: String,
}

impl ProofRecord {
    fn from_proof<G: Group>(p: &SchnorrProof<G>) -> Self {
        Self {
            commitment: element_hex::<G>(&p.commitment),
            response: scalar_hex::<G>(&p.response),
        }
    }

    fn to_proof<G: Group>(&self) -> Result<SchnorrProof<G>, FrostError> {
        Ok(SchnorrProof {
            commitment: element_from_hex::<G>(&self.commitment)?,
            response: scalar_from_hex::<G>(&self.response)?,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TranscriptRecord {
    Context {
        group: String,
        context: SessionContext,
        params: ThresholdParams,
        participants: Vec<ParticipantIndex>,
        recipients: Vec<ParticipantIndex>,
    },
    RefreshBase {
        group_key: String,
        threshold: u32,
        epoch: u64,
        holders: Vec<ParticipantIndex>,
        verification_shares: BTreeMap<ParticipantIndex, String>,
    },
    Round1 {
        sender: ParticipantIndex,
        commitments: Vec<String>,
        coefficient_proof: ProofRecord,
        encryption_key: String,
        encryption_key_proof: ProofRecord,
    },
    Share {
        dealer: ParticipantIndex,
        recipient: ParticipantIndex,
        ciphertext: String,
    },
    Complaint {
        accuser: ParticipantIndex,
        accused: ParticipantIndex,
        revealed_dh: String,
        a1: String,
        a2: String,
        z: String,
    },
    Malicious {
        reporter: ParticipantIndex,
        accused: ParticipantIndex,
    },
    GroupKey {
        sender: ParticipantIndex,
        key: String,
    },
}
