use std::ops::{Add, Mul, Neg, Sub};

use super::{Group, GroupError};

const P: u64 = 47;
const Q: u64 = 23;
const G: u64 = 2;

/// The order-23 subgroup of the multiplicative group modulo 47, generated by 2.
///
/// Offers no security whatsoever; it exists so that test vectors can be
/// checked by hand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inspection;

/// An integer modulo 23.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InspectionScalar(u8);

/// A residue modulo 47 lying in the subgroup generated by 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InspectionElement(u8);

impl InspectionScalar {
    pub fn value(self) -> u64 {
        self.0.into()
    }
}

impl InspectionElement {
    pub fn value(self) -> u64 {
        self.0.into()
    }
}

fn pow_mod(mut base: u64, mut exp: u64, modulus: u64) -> u64 {
    let mut acc = 1 % modulus;
    base %= modulus;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % modulus;
        }
        base = base * base % modulus;
        exp >>= 1;
    }
    acc
}

impl Add for InspectionScalar {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(((self.value() + rhs.value()) % Q) as u8)
    }
}

impl Sub for InspectionScalar {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self(((self.value() + Q - rhs.value()) % Q) as u8)
    }
}

impl Mul for InspectionScalar {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self((self.value() * rhs.value() % Q) as u8)
    }
}

impl Neg for InspectionScalar {
    type Output = Self;
    fn neg(self) -> Self {
        Self(((Q - self.value()) % Q) as u8)
    }
}

// Group operation is multiplication mod 47, written additively.
impl Add for InspectionElement {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self((self.value() * rhs.value() % P) as u8)
    }
}

impl Neg for InspectionElement {
    type Output = Self;
    fn neg(self) -> Self {
        // x^(q-1) = x^{-1} inside an order-q subgroup.
        Self(pow_mod(self.value(), Q - 1, P) as u8)
    }
}

impl Sub for InspectionElement {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Mul<InspectionScalar> for InspectionElement {
    type Output = Self;
    fn mul(self, rhs: InspectionScalar) -> Self {
        Self(pow_mod(self.value(), rhs.value(), P) as u8)
    }
}

impl Group for Inspection {
    type Scalar = InspectionScalar;
    type Element = InspectionElement;

    const NAME: &'static str = "inspection-47-23";
    const SCALAR_LEN: usize = 1;
    const ELEMENT_LEN: usize = 1;

    fn generator() -> InspectionElement {
        InspectionElement(G as u8)
    }

    fn identity() -> InspectionElement {
        InspectionElement(1)
    }

    fn scalar_from_u64(value: u64) -> InspectionScalar {
        InspectionScalar((value % Q) as u8)
    }

    fn scalar_from_wide(bytes: &[u8; 64]) -> InspectionScalar {
        let r = bytes
            .iter()
            .fold(0u64, |acc, &b| (acc * 256 + u64::from(b)) % Q);
        InspectionScalar(r as u8)
    }

    fn invert(scalar: &InspectionScalar) -> Option<InspectionScalar> {
        if scalar.0 == 0 {
            None
        } else {
            Some(InspectionScalar(pow_mod(scalar.value(), Q - 2, Q) as u8))
        }
    }

    fn encode_scalar(scalar: &InspectionScalar) -> Vec<u8> {
        vec![scalar.0]
    }

    fn decode_scalar(bytes: &[u8]) -> Result<InspectionScalar, GroupError> {
        match bytes {
            [b] if u64::from(*b) < Q => Ok(InspectionScalar(*b)),
            _ => Err(GroupError::InvalidScalar),
        }
    }

    fn encode_element(element: &InspectionElement) -> Vec<u8> {
        vec![element.0]
    }

    fn decode_element(bytes: &[u8]) -> Result<InspectionElement, GroupError> {
        match bytes {
            [b] if *b != 0 && u64::from(*b) < P && pow_mod((*b).into(), Q, P) == 1 => {
                Ok(InspectionElement(*b))
            }
            _ => Err(GroupError::InvalidElement),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_has_order_23() {
        assert_eq!(pow_mod(2, 23, 47), 1);
        assert_ne!(pow_mod(2, 2, 47), 1);
        // 23 is prime so the only other divisor is 1.
        assert_ne!(pow_mod(2, 1, 47), 1);
    }

    #[test]
    fn subgroup_has_23_members() {
        let members: std::collections::BTreeSet<u64> = (0..23)
            .map(|k| Inspection::mul_base(&Inspection::scalar_from_u64(k)).value())
            .collect();
        assert_eq!(members.len(), 23);
        for v in 1..47u8 {
            assert_eq!(
                Inspection::decode_element(&[v]).is_ok(),
                members.contains(&u64::from(v))
            );
        }
    }

    #[test]
    fn base_mul_vector() {
        let phi = Inspection::mul_base(&Inspection::scalar_from_u64(7));
        assert_eq!(phi.value(), 34);
    }

    #[test]
    fn field_axioms_exhaustive() {
        for a in 0..23 {
            let a = Inspection::scalar_from_u64(a);
            assert_eq!(a + (-a), Inspection::zero());
            if a != Inspection::zero() {
                assert_eq!(a * Inspection::invert(&a).unwrap(), Inspection::one());
            }
            for b in 0..23 {
                let b = Inspection::scalar_from_u64(b);
                assert_eq!(a + b, b + a);
                assert_eq!(a * b, b * a);
                assert_eq!((a - b) + b, a);
            }
        }
        assert_eq!(Inspection::invert(&Inspection::zero()), None);
    }

    #[test]
    fn element_inverse_and_identity() {
        let g = Inspection::generator();
        assert_eq!(g + (-g), Inspection::identity());
        assert_eq!(g * Inspection::scalar_from_u64(23), Inspection::identity());
        assert!(Inspection::decode_element(&[0]).is_err());
        assert!(Inspection::decode_element(&[5]).is_err());
        assert!(Inspection::decode_scalar(&[23]).is_err());
    }
}
