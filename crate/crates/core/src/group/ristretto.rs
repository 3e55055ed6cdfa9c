use curve25519_dalek::constants::{RISTRETTO_BASEPOINT_POINT, RISTRETTO_BASEPOINT_TABLE};
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;

use super::{Group, GroupError};

/// The Ristretto255 prime-order group (~126-bit security).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ristretto255;

impl Group for Ristretto255 {
    type Scalar = Scalar;
    type Element = RistrettoPoint;

    const NAME: &'static str = "ristretto255";
    const SCALAR_LEN: usize = 32;
    const ELEMENT_LEN: usize = 32;

    fn generator() -> RistrettoPoint {
        RISTRETTO_BASEPOINT_POINT
    }

    fn identity() -> RistrettoPoint {
        RistrettoPoint::identity()
    }

    fn scalar_from_u64(value: u64) -> Scalar {
        Scalar::from(value)
    }

    fn scalar_from_wide(bytes: &[u8; 64]) -> Scalar {
        Scalar::from_bytes_mod_order_wide(bytes)
    }

    fn invert(scalar: &Scalar) -> Option<Scalar> {
        if *scalar == Scalar::ZERO {
            None
        } else {
            Some(scalar.invert())
        }
    }

    fn encode_scalar(scalar: &Scalar) -> Vec<u8> {
        scalar.to_bytes().to_vec()
    }

    fn decode_scalar(bytes: &[u8]) -> Result<Scalar, GroupError> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| GroupError::InvalidScalar)?;
        Option::from(Scalar::from_canonical_bytes(arr)).ok_or(GroupError::InvalidScalar)
    }

    fn encode_element(element: &RistrettoPoint) -> Vec<u8> {
        element.compress().to_bytes().to_vec()
    }

    fn decode_element(bytes: &[u8]) -> Result<RistrettoPoint, GroupError> {
        let compressed =
            CompressedRistretto::from_slice(bytes).map_err(|_| GroupError::InvalidElement)?;
        compressed.decompress().ok_or(GroupError::InvalidElement)
    }

    fn mul_base(scalar: &Scalar) -> RistrettoPoint {
        RISTRETTO_BASEPOINT_TABLE * scalar
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::random_scalar;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn encodings_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..32 {
            let s = random_scalar::<Ristretto255, _>(&mut rng);
            let e = Ristretto255::mul_base(&s);
            assert_eq!(
                Ristretto255::decode_scalar(&Ristretto255::encode_scalar(&s)).unwrap(),
                s
            );
            assert_eq!(
                Ristretto255::decode_element(&Ristretto255::encode_element(&e)).unwrap(),
                e
            );
            assert_eq!(Ristretto255::generator() * s, e);
        }
    }

    #[test]
    fn rejects_invalid_encodings() {
        assert!(Ristretto255::decode_element(&[0xff; 32]).is_err());
        assert!(Ristretto255::decode_element(&[0u8; 31]).is_err());
        assert!(Ristretto255::decode_scalar(&[0xff; 32]).is_err());
    }
}
