//! Two-round threshold Schnorr signing with per-response verification.

use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, Rng};

use super::{FrostError, GroupKey, KeyMaterial, ParticipantIndex};
use crate::group::{
    hash_to_scalar, lagrange_coeff, random_nonzero_scalar, Group, GroupError, HashInput,
};

const BINDING_TAG: &str = "ice-frost/H1/binding";
const CHALLENGE_TAG: &str = "ice-frost/H2/challenge";

/// `(l, D_l, E_l)` published in the first signing round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonceCommitment<G: Group> {
    pub index: ParticipantIndex,
    pub hiding: G::Element,
    pub binding: G::Element,
}

/// `z_i` from one signer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignatureShare<G: Group> {
    pub index: ParticipantIndex,
    pub response: G::Scalar,
}

/// `σ = (R, z)`, verifiable with `g^z = R·Y^c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdSignature<G: Group> {
    pub r: G::Element,
    pub z: G::Scalar,
}

impl<G: Group> ThresholdSignature<G> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = G::encode_element(&self.r);
        out.extend(G::encode_scalar(&self.z));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GroupError> {
        if bytes.len() != G::ELEMENT_LEN + G::SCALAR_LEN {
            return Err(GroupError::InvalidElement);
        }
        let (r, z) = bytes.split_at(G::ELEMENT_LEN);
        Ok(Self {
            r: G::decode_element(r)?,
            z: G::decode_scalar(z)?,
        })
    }
}

fn encode_commitment_list<G: Group>(list: &[NonceCommitment<G>]) -> Vec<u8> {
    list.iter()
        .fold(HashInput::new(), |h, c| {
            h.index(c.index)
                .element::<G>(&c.hiding)
                .element::<G>(&c.binding)
        })
        .finish()
}

fn binding_factor<G: Group>(index: ParticipantIndex, message: &[u8], encoded_list: &[u8]) -> G::Scalar {
    let data = HashInput::new()
        .index(index)
        .bytes(message)
        .bytes(encoded_list)
        .finish();
    hash_to_scalar::<G>(BINDING_TAG, &data)
}

fn challenge<G: Group>(r: &G::Element, group_key: &G::Element, message: &[u8]) -> G::Scalar {
    let data = HashInput::new()
        .element::<G>(r)
        .element::<G>(group_key)
        .bytes(message)
        .finish();
    hash_to_scalar::<G>(CHALLENGE_TAG, &data)
}

/// Sorts and validates a commitment list: indices must be unique and
/// nonzero.
fn normalize<G: Group>(
    commitments: &[NonceCommitment<G>],
) -> Result<Vec<NonceCommitment<G>>, FrostError> {
    let mut list = commitments.to_vec();
    list.sort_by_key(|c| c.index);
    if list.windows(2).any(|w| w[0].index == w[1].index) || list.iter().any(|c| c.index == 0) {
        return Err(FrostError::CommitmentMismatch);
    }
    Ok(list)
}

/// `(R, Σ z_l)` for whatever responses are given, with no threshold or
/// response checks. Only useful to show that such a combination fails.
pub fn combine_responses<G: Group>(
    commitments: &[NonceCommitment<G>],
    message: &[u8],
    shares: &[SignatureShare<G>],
) -> Result<ThresholdSignature<G>, FrostError> {
    let (r, _) = group_commitment(commitments, message)?;
    let z = shares.iter().fold(G::zero(), |acc, s| acc + s.response);
    Ok(ThresholdSignature { r, z })
}

/// Per-signer commitments `R_l = D_l·E_l^{ρ_l}` and their product `R`.
pub fn group_commitment<G: Group>(
    commitments: &[NonceCommitment<G>],
    message: &[u8],
) -> Result<(G::Element, BTreeMap<ParticipantIndex, (G::Element, G::Scalar)>), FrostError> {
    let list = normalize(commitments)?;
    let encoded = encode_commitment_list(&list);
    let mut total = G::identity();
    let mut per_signer = BTreeMap::new();
    for c in &list {
        let rho = binding_factor::<G>(c.index, message, &encoded);
        let r_l = c.hiding + c.binding * rho;
        total = total + r_l;
        per_signer.insert(c.index, (r_l, rho));
    }
    Ok((total, per_signer))
}

pub fn verify_signature<G: Group>(
    group_key: &G::Element,
    message: &[u8],
    signature: &ThresholdSignature<G>,
) -> bool {
    let c = challenge::<G>(&signature.r, group_key, message);
    G::mul_base(&signature.z) == signature.r + *group_key * c
}

/// One signer's state for a single signing attempt. Nonces are used once:
/// a retry needs a new session.
#[derive(Debug)]
pub struct SigningSession<G: Group> {
    key: KeyMaterial<G>,
    message: Vec<u8>,
    nonces: Option<(G::Scalar, G::Scalar)>,
    generated: bool,
}

impl<G: Group> SigningSession<G> {
    pub fn new(key: KeyMaterial<G>, message: &[u8]) -> Self {
        Self {
            key,
            message: message.to_vec(),
            nonces: None,
            generated: false,
        }
    }

    pub fn index(&self) -> ParticipantIndex {
        self.key.index
    }

    /// Samples nonzero `(d_i, e_i)` and returns `(i, g^d_i, g^e_i)`.
    pub fn commit<R: Rng + CryptoRng + ?Sized>(
        &mut self,
        rng: &mut R,
    ) -> Result<NonceCommitment<G>, FrostError> {
        if self.generated {
            return Err(FrostError::NoncesAlreadyGenerated);
        }
        let d = random_nonzero_scalar::<G, R>(rng);
        let e = random_nonzero_scalar::<G, R>(rng);
        self.nonces = Some((d, e));
        self.generated = true;
        Ok(NonceCommitment {
            index: self.key.index,
            hiding: G::mul_base(&d),
            binding: G::mul_base(&e),
        })
    }

    /// `z_i = d_i + e_i·ρ_i + λ_i·s_i·c`; erases the nonces.
    pub fn sign(
        &mut self,
        commitments: &[NonceCommitment<G>],
    ) -> Result<SignatureShare<G>, FrostError> {
        let (d, e) = self.nonces.ok_or(FrostError::NoncesUnavailable)?;
        let list = normalize(commitments)?;
        let own = list
            .iter()
            .find(|c| c.index == self.key.index)
            .ok_or(FrostError::NotASigner(self.key.index))?;
        if own.hiding != G::mul_base(&d) || own.binding != G::mul_base(&e) {
            return Err(FrostError::CommitmentMismatch);
        }
        let (r, per_signer) = group_commitment(&list, &self.message)?;
        let rho = per_signer[&self.key.index].1;
        let set: Vec<_> = list.iter().map(|c| c.index).collect();
        let lambda = lagrange_coeff::<G>(&set, self.key.index)?;
        let c = challenge::<G>(&r, &self.key.public.group_key, &self.message);
        self.nonces = None;
        Ok(SignatureShare {
            index: self.key.index,
            response: d + e * rho + lambda * self.key.signing_share * c,
        })
    }
}

/// Collects and checks responses for one signing attempt.
#[derive(Debug, Clone)]
pub struct SignatureAggregator<G: Group> {
    group_key: G::Element,
    message: Vec<u8>,
    r: G::Element,
    c: G::Scalar,
    /// `(R_l, λ_l, Y_l)` per signer.
    expected: BTreeMap<ParticipantIndex, (G::Element, G::Scalar, G::Element)>,
}

impl<G: Group> SignatureAggregator<G> {
    pub fn new(
        public: &GroupKey<G>,
        message: &[u8],
        commitments: &[NonceCommitment<G>],
    ) -> Result<Self, FrostError> {
        let list = normalize(commitments)?;
        if list.len() < public.threshold as usize {
            return Err(FrostError::TooFewSigners {
                have: list.len(),
                need: public.threshold,
            });
        }
        let set: Vec<_> = list.iter().map(|c| c.index).collect();
        let (r, per_signer) = group_commitment(&list, message)?;
        let c = challenge::<G>(&r, &public.group_key, message);
        let mut expected = BTreeMap::new();
        for (l, (r_l, _)) in per_signer {
            let y = *public
                .verification_shares
                .get(&l)
                .ok_or(FrostError::NotASigner(l))?;
            expected.insert(l, (r_l, lagrange_coeff::<G>(&set, l)?, y));
        }
        Ok(Self {
            group_key: public.group_key,
            message: message.to_vec(),
            r,
            c,
            expected,
        })
    }

    pub fn signers(&self) -> BTreeSet<ParticipantIndex> {
        self.expected.keys().copied().collect()
    }

    pub fn challenge(&self) -> G::Scalar {
        self.c
    }

    /// `g^{z_l} = R_l·Y_l^{c·λ_l}`.
    pub fn verify_share(&self, share: &SignatureShare<G>) -> bool {
        match self.expected.get(&share.index) {
            Some((r_l, lambda, y)) => {
                G::mul_base(&share.response) == *r_l + *y * (self.c * *lambda)
            }
            None => false,
        }
    }

    /// Checks every response, then combines. Signers that sent a bad
    /// response or none at all are reported.
    pub fn aggregate(
        &self,
        shares: &[SignatureShare<G>],
    ) -> Result<ThresholdSignature<G>, FrostError> {
        let by_index: BTreeMap<_, _> = shares.iter().map(|s| (s.index, *s)).collect();
        let bad: BTreeSet<_> = self
            .expected
            .keys()
            .filter(|l| !by_index.get(l).is_some_and(|s| self.verify_share(s)))
            .copied()
            .collect();
        if !bad.is_empty() {
            return Err(FrostError::InvalidResponses(bad));
        }
        let sig = self.combine_unchecked(shares);
        debug_assert!(verify_signature(&self.group_key, &self.message, &sig));
        Ok(sig)
    }

    /// `z = Σ z_l` without checking the individual responses.
    pub fn combine_unchecked(&self, shares: &[SignatureShare<G>]) -> ThresholdSignature<G> {
        let z = shares
            .iter()
            .filter(|s| self.expected.contains_key(&s.index))
            .fold(G::zero(), |acc, s| acc + s.response);
        ThresholdSignature { r: self.r, z }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{random_scalar, poly_eval, Ristretto255};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    type G = Ristretto255;

    /// Trusted-dealer shares, independent of the key generation code.
    fn dealt_keys(t: u32, n: u32, rng: &mut ChaCha20Rng) -> Vec<KeyMaterial<G>> {
        let coeffs: Vec<_> = (0..t).map(|_| random_scalar::<G, _>(rng)).collect();
        let shares: BTreeMap<u32, _> = (1..=n)
            .map(|i| (i, poly_eval::<G>(&coeffs, &G::scalar_from_u64(i.into()))))
            .collect();
        let public = GroupKey {
            group_key: G::mul_base(&coeffs[0]),
            threshold: t,
            epoch: 0,
            verification_shares: shares.iter().map(|(i, s)| (*i, G::mul_base(s))).collect(),
        };
        shares
            .into_iter()
            .map(|(index, signing_share)| KeyMaterial {
                index,
                signing_share,
                public: public.clone(),
            })
            .collect()
    }

    fn sign_with(
        keys: &[KeyMaterial<G>],
        signers: &[u32],
        msg: &[u8],
        rng: &mut ChaCha20Rng,
    ) -> (SignatureAggregator<G>, Vec<SignatureShare<G>>) {
        let mut sessions: Vec<_> = signers
            .iter()
            .map(|i| SigningSession::new(keys[*i as usize - 1].clone(), msg))
            .collect();
        let comms: Vec<_> = sessions.iter_mut().map(|s| s.commit(rng).unwrap()).collect();
        let agg = SignatureAggregator::new(&keys[0].public, msg, &comms).unwrap();
        let shares = sessions.iter_mut().map(|s| s.sign(&comms).unwrap()).collect();
        (agg, shares)
    }

    #[test]
    fn every_subset_signs() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let keys = dealt_keys(3, 5, &mut rng);
        for mask in 0u32..32 {
            let set: Vec<u32> = (1..=5).filter(|i| mask & (1 << (i - 1)) != 0).collect();
            if set.len() < 3 {
                continue;
            }
            let (agg, shares) = sign_with(&keys, &set, b"m", &mut rng);
            let sig = agg.aggregate(&shares).unwrap();
            assert!(verify_signature(&keys[0].public.group_key, b"m", &sig));
            assert!(!verify_signature(&keys[0].public.group_key, b"m'", &sig));
        }
    }

    #[test]
    fn below_threshold_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let keys = dealt_keys(3, 5, &mut rng);
        let mut sessions: Vec<_> = [1u32, 2]
            .iter()
            .map(|i| SigningSession::new(keys[*i as usize - 1].clone(), b"m"))
            .collect();
        let comms: Vec<_> = sessions.iter_mut().map(|s| s.commit(&mut rng).unwrap()).collect();
        assert!(matches!(
            SignatureAggregator::new(&keys[0].public, b"m", &comms),
            Err(FrostError::TooFewSigners { have: 2, need: 3 })
        ));
        let shares: Vec<_> = sessions.iter_mut().map(|s| s.sign(&comms).unwrap()).collect();
        let sig = combine_responses(&comms, b"m", &shares).unwrap();
        assert!(!verify_signature(&keys[0].public.group_key, b"m", &sig));
    }

    #[test]
    fn bad_response_identified() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let keys = dealt_keys(2, 3, &mut rng);
        let (agg, mut shares) = sign_with(&keys, &[1, 2, 3], b"m", &mut rng);
        shares[1].response = shares[1].response + G::one();
        assert_eq!(
            agg.aggregate(&shares),
            Err(FrostError::InvalidResponses([2].into()))
        );
        let forged = agg.combine_unchecked(&shares);
        assert!(!verify_signature(&keys[0].public.group_key, b"m", &forged));
    }

    #[test]
    fn nonces_single_use() {
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let keys = dealt_keys(1, 1, &mut rng);
        let mut s = SigningSession::new(keys[0].clone(), b"m");
        let c = s.commit(&mut rng).unwrap();
        assert_eq!(s.commit(&mut rng), Err(FrostError::NoncesAlreadyGenerated));
        s.sign(&[c]).unwrap();
        assert_eq!(s.sign(&[c]), Err(FrostError::NoncesUnavailable));
    }

    #[test]
    fn fresh_nonces_per_session() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let keys = dealt_keys(1, 1, &mut rng);
        let mut seen = BTreeSet::new();
        for _ in 0..50 {
            let mut s = SigningSession::new(keys[0].clone(), b"m");
            let c = s.commit(&mut rng).unwrap();
            assert_ne!(c.hiding, G::identity());
            assert!(seen.insert(G::encode_element(&c.hiding)));
            assert!(seen.insert(G::encode_element(&c.binding)));
        }
    }

    #[test]
    fn signature_bytes_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        let keys = dealt_keys(2, 2, &mut rng);
        let (agg, shares) = sign_with(&keys, &[1, 2], b"x", &mut rng);
        let sig = agg.aggregate(&shares).unwrap();
        let back = ThresholdSignature::<G>::from_bytes(&sig.to_bytes()).unwrap();
        assert_eq!(back, sig);
        assert!(ThresholdSignature::<G>::from_bytes(&[0u8; 10]).is_err());
    }

    #[test]
    fn commitment_order_does_not_matter() {
        let mut rng = ChaCha20Rng::seed_from_u64(16);
        let keys = dealt_keys(2, 3, &mut rng);
        let mut a = SigningSession::new(keys[0].clone(), b"m");
        let mut b = SigningSession::new(keys[2].clone(), b"m");
        let ca = a.commit(&mut rng).unwrap();
        let cb = b.commit(&mut rng).unwrap();
        let (r1, _) = group_commitment(&[ca, cb], b"m").unwrap();
        let (r2, _) = group_commitment(&[cb, ca], b"m").unwrap();
        assert_eq!(r1, r2);
        assert!(group_commitment(&[ca, ca], b"m").is_err());
    }
}
