//! Prime-order group abstraction shared by every threshold-signature routine.
//!
//! Two backends implement [`Group`]:
//!
//! * [`Ristretto255`], the prime-order Ristretto encoding of Curve25519, used
//!   for anything that needs real security;
//! * [`Inspection`], the order-23 subgroup of `Z_47^*` generated by `2`, small
//!   enough that every value in a test vector can be checked by hand.
//!
//! All protocol code is written against the trait, so the same keygen and
//! signing logic runs over both.

mod inspection;
mod ristretto;
mod symmetric;

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use rand::{CryptoRng, Rng};
use sha2::{Digest, Sha512};

pub use inspection::{Inspection, InspectionElement, InspectionScalar};
pub use ristretto::Ristretto255;
pub use symmetric::{derive_symmetric_key, SymmetricKey, NONCE_LEN};

/// Errors raised while decoding group data or decrypting shares.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GroupError {
    #[error("invalid scalar encoding")]
    InvalidScalar,
    #[error("invalid group element encoding")]
    InvalidElement,
    #[error("index set contains zero or a duplicate")]
    InvalidIndexSet,
    #[error("index {0} is not a member of the interpolation set")]
    IndexNotInSet(u32),
    #[error("authenticated decryption failed")]
    Decryption,
}

/// A cyclic group of prime order `q` with a fixed generator.
///
/// Elements are written additively in code (`a + b`, `p * s`) regardless of
/// whether the backend is a curve or a multiplicative subgroup.
pub trait Group: Copy + Clone + Debug + PartialEq + Eq + Send + Sync + 'static {
    type Scalar: Copy
        + Eq
        + Debug
        + Send
        + Sync
        + Add<Output = Self::Scalar>
        + Sub<Output = Self::Scalar>
        + Mul<Output = Self::Scalar>
        + Neg<Output = Self::Scalar>;

    type Element: Copy
        + Eq
        + Debug
        + Send
        + Sync
        + Add<Output = Self::Element>
        + Sub<Output = Self::Element>
        + Neg<Output = Self::Element>
        + Mul<Self::Scalar, Output = Self::Element>;

    /// Short backend label, used in transcripts.
    const NAME: &'static str;
    /// Length of a canonical scalar encoding.
    const SCALAR_LEN: usize;
    /// Length of a canonical element encoding.
    const ELEMENT_LEN: usize;

    fn generator() -> Self::Element;

    fn identity() -> Self::Element;

    fn scalar_from_u64(value: u64) -> Self::Scalar;

    /// Reduces 64 uniformly random bytes to a scalar.
    fn scalar_from_wide(bytes: &[u8; 64]) -> Self::Scalar;

    fn invert(scalar: &Self::Scalar) -> Option<Self::Scalar>;

    fn encode_scalar(scalar: &Self::Scalar) -> Vec<u8>;

    fn decode_scalar(bytes: &[u8]) -> Result<Self::Scalar, GroupError>;

    fn encode_element(element: &Self::Element) -> Vec<u8>;

    fn decode_element(bytes: &[u8]) -> Result<Self::Element, GroupError>;

    /// `g^s`. Backends may override with a precomputed table.
    fn mul_base(scalar: &Self::Scalar) -> Self::Element {
        Self::generator() * *scalar
    }

    fn zero() -> Self::Scalar {
        Self::scalar_from_u64(0)
    }

    fn one() -> Self::Scalar {
        Self::scalar_from_u64(1)
    }

    fn is_zero(scalar: &Self::Scalar) -> bool {
        *scalar == Self::zero()
    }
}

/// Samples a uniform scalar.
pub fn random_scalar<G: Group, R: Rng + CryptoRng + ?Sized>(rng: &mut R) -> G::Scalar {
    let mut wide = [0u8; 64];
    rng.fill_bytes(&mut wide);
    G::scalar_from_wide(&wide)
}

/// Samples a uniform nonzero scalar.
pub fn random_nonzero_scalar<G: Group, R: Rng + CryptoRng + ?Sized>(rng: &mut R) -> G::Scalar {
    loop {
        let s = random_scalar::<G, R>(rng);
        if !G::is_zero(&s) {
            return s;
        }
    }
}

/// Evaluates `Σ coeffs[j]·x^j` by Horner's rule.
///
/// # Panics
///
/// Panics if `coeffs` is empty.
pub fn poly_eval<G: Group>(coeffs: &[G::Scalar], x: &G::Scalar) -> G::Scalar {
    assert!(!coeffs.is_empty(), "polynomial must have at least one coefficient");
    coeffs
        .iter()
        .rev()
        .fold(G::zero(), |acc, c| acc * *x + *c)
}

/// Evaluates `Π_k commitments[k]^(x^k)`, the commitment-side image of
/// [`poly_eval`].
pub fn commitment_eval<G: Group>(commitments: &[G::Element], x: &G::Scalar) -> G::Element {
    commitments
        .iter()
        .rev()
        .fold(G::identity(), |acc, c| acc * *x + *c)
}

fn check_index_set(set: &[u32]) -> Result<(), GroupError> {
    let mut seen = std::collections::BTreeSet::new();
    for &j in set {
        if j == 0 || !seen.insert(j) {
            return Err(GroupError::InvalidIndexSet);
        }
    }
    Ok(())
}

/// Lagrange coefficient of `i` over `set`, evaluated at zero:
/// `Π_{j≠i} j·(j−i)^{-1}`.
pub fn lagrange_coeff<G: Group>(set: &[u32], i: u32) -> Result<G::Scalar, GroupError> {
    lagrange_coeff_at::<G>(set, i, &G::zero())
}

/// Lagrange coefficient of `i` over `set`, evaluated at `x`:
/// `Π_{j≠i} (x−j)·(i−j)^{-1}`.
pub fn lagrange_coeff_at<G: Group>(
    set: &[u32],
    i: u32,
    x: &G::Scalar,
) -> Result<G::Scalar, GroupError> {
    check_index_set(set)?;
    if !set.contains(&i) {
        return Err(GroupError::IndexNotInSet(i));
    }
    let xi = G::scalar_from_u64(i.into());
    let mut num = G::one();
    let mut den = G::one();
    for &j in set.iter().filter(|&&j| j != i) {
        let xj = G::scalar_from_u64(j.into());
        num = num * (*x - xj);
        den = den * (xi - xj);
    }
    // Indices that collide modulo q make the denominator vanish.
    let inv = G::invert(&den).ok_or(GroupError::InvalidIndexSet)?;
    Ok(num * inv)
}

/// Hashes `(tag, data)` to a nonzero scalar.
///
/// Distinct tags give independent functions: the keygen proofs, the binding
/// factor and the signing challenge each use their own.
pub fn hash_to_scalar<G: Group>(domain_tag: &str, data: &[u8]) -> G::Scalar {
    let mut counter: u32 = 0;
    loop {
        let mut h = Sha512::new();
        h.update(b"tce-hash-to-scalar");
        h.update((G::NAME.len() as u32).to_be_bytes());
        h.update(G::NAME.as_bytes());
        h.update((domain_tag.len() as u32).to_be_bytes());
        h.update(domain_tag.as_bytes());
        h.update((data.len() as u64).to_be_bytes());
        h.update(data);
        h.update(counter.to_be_bytes());
        let wide: [u8; 64] = h.finalize().into();
        let s = G::scalar_from_wide(&wide);
        if !G::is_zero(&s) {
            return s;
        }
        counter += 1;
    }
}

/// Builds length-prefixed hash inputs from heterogeneous protocol values.
#[derive(Debug, Default, Clone)]
pub struct HashInput {
    bytes: Vec<u8>,
}

impl HashInput {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(mut self, data: &[u8]) -> Self {
        self.bytes
            .extend_from_slice(&(data.len() as u64).to_be_bytes());
        self.bytes.extend_from_slice(data);
        self
    }

    pub fn index(mut self, i: u32) -> Self {
        self.bytes.extend_from_slice(&i.to_be_bytes());
        self
    }

    pub fn element<G: Group>(self, e: &G::Element) -> Self {
        self.bytes(&G::encode_element(e))
    }

    pub fn scalar<G: Group>(self, s: &G::Scalar) -> Self {
        self.bytes(&G::encode_scalar(s))
    }

    pub fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

pub fn element_hex<G: Group>(e: &G::Element) -> String {
    hex::encode(G::encode_element(e))
}

pub fn scalar_hex<G: Group>(s: &G::Scalar) -> String {
    hex::encode(G::encode_scalar(s))
}

pub fn element_from_hex<G: Group>(s: &str) -> Result<G::Element, GroupError> {
    let bytes = hex::decode(s).map_err(|_| GroupError::InvalidElement)?;
    G::decode_element(&bytes)
}

pub fn scalar_from_hex<G: Group>(s: &str) -> Result<G::Scalar, GroupError> {
    let bytes = hex::decode(s).map_err(|_| GroupError::InvalidScalar)?;
    G::decode_scalar(&bytes)
}
