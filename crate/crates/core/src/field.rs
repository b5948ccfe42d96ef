//! Arithmetic in a prime field F_q.
//!
//! Hot loops work on raw `u32` residues through [`PrimeField`]; [`FieldElement`]
//! is the checked value type that refuses to mix moduli.

use std::fmt;

use crate::error::{Error, Result};

/// A prime field F_q with small q.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PrimeField {
    q: u32,
}

fn is_prime(q: u32) -> bool {
    if q < 2 {
        return false;
    }
    let mut d = 2u32;
    while (d as u64) * (d as u64) <= q as u64 {
        if q.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

impl PrimeField {
    pub fn new(q: u32) -> Result<Self> {
        if !is_prime(q) {
            return Err(Error::NotPrime(q));
        }
        Ok(PrimeField { q })
    }

    pub fn order(&self) -> u32 {
        self.q
    }

    pub fn reduce(&self, v: i64) -> u32 {
        v.rem_euclid(self.q as i64) as u32
    }

    #[inline]
    pub fn add(&self, a: u32, b: u32) -> u32 {
        ((a as u64 + b as u64) % self.q as u64) as u32
    }

    #[inline]
    pub fn sub(&self, a: u32, b: u32) -> u32 {
        ((a as u64 + self.q as u64 - b as u64) % self.q as u64) as u32
    }

    #[inline]
    pub fn neg(&self, a: u32) -> u32 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u32, b: u32) -> u32 {
        ((a as u64 * b as u64) % self.q as u64) as u32
    }

    pub fn pow(&self, a: u32, mut e: u64) -> u32 {
        let mut base = a % self.q;
        let mut acc = 1 % self.q;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// Inverse by Fermat's little theorem.
    pub fn inv(&self, a: u32) -> Result<u32> {
        if a.is_multiple_of(self.q) {
            return Err(Error::DivisionByZero);
        }
        Ok(self.pow(a, self.q as u64 - 2))
    }

    /// All q elements in ascending order.
    pub fn elements(&self) -> Vec<u32> {
        (0..self.q).collect()
    }

    pub fn element(&self, value: u32) -> Result<FieldElement> {
        FieldElement::new(*self, value)
    }

    /// Signed representative in (-q/2, q/2], used when printing coefficients.
    pub fn signed(&self, a: u32) -> i64 {
        if a as u64 * 2 > self.q as u64 {
            a as i64 - self.q as i64
        } else {
            a as i64
        }
    }
}

impl fmt::Display for PrimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F_{}", self.q)
    }
}

/// An element of a specific prime field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u32,
    field: PrimeField,
}

impl FieldElement {
    pub fn new(field: PrimeField, value: u32) -> Result<Self> {
        if value >= field.q {
            return Err(Error::OutOfField { value, q: field.q });
        }
        Ok(FieldElement { value, field })
    }

    pub fn value(&self) -> u32 {
        self.value
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    fn same_field(&self, other: &FieldElement) -> Result<PrimeField> {
        if self.field != other.field {
            return Err(Error::FieldMismatch {
                left: self.field.q,
                right: other.field.q,
            });
        }
        Ok(self.field)
    }

    pub fn checked_add(self, other: FieldElement) -> Result<FieldElement> {
        let f = self.same_field(&other)?;
        Ok(FieldElement { value: f.add(self.value, other.value), field: f })
    }

    pub fn checked_sub(self, other: FieldElement) -> Result<FieldElement> {
        let f = self.same_field(&other)?;
        Ok(FieldElement { value: f.sub(self.value, other.value), field: f })
    }

    pub fn checked_mul(self, other: FieldElement) -> Result<FieldElement> {
        let f = self.same_field(&other)?;
        Ok(FieldElement { value: f.mul(self.value, other.value), field: f })
    }

    pub fn inv(self) -> Result<FieldElement> {
        Ok(FieldElement { value: self.field.inv(self.value)?, field: self.field })
    }
}

impl std::ops::Neg for FieldElement {
    type Output = FieldElement;

    fn neg(self) -> FieldElement {
        FieldElement { value: self.field.neg(self.value), field: self.field }
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fe(q: u32, v: u32) -> FieldElement {
        PrimeField::new(q).unwrap().element(v).unwrap()
    }

    #[test]
    fn primality() {
        assert!(PrimeField::new(2).is_ok());
        assert!(PrimeField::new(3).is_ok());
        assert!(PrimeField::new(97).is_ok());
        assert!(matches!(PrimeField::new(1), Err(Error::NotPrime(1))));
        assert!(matches!(PrimeField::new(9), Err(Error::NotPrime(9))));
    }

    #[test]
    fn small_examples() {
        assert_eq!(fe(3, 2).checked_add(fe(3, 2)).unwrap().value(), 1);
        assert_eq!(fe(2, 1).checked_add(fe(2, 1)).unwrap().value(), 0);
        assert_eq!(fe(5, 0).checked_add(fe(5, 4)).unwrap().value(), 4);
        assert_eq!((-fe(3, 1)).value(), 2);
        assert_eq!(fe(5, 3).checked_mul(fe(5, 4)).unwrap().value(), 2);
        assert_eq!((-fe(2, 1)).value(), 1);
        assert_eq!(fe(3, 2).inv().unwrap().value(), 2);
        assert_eq!(fe(5, 3).inv().unwrap().value(), 2);
        assert!(matches!(fe(7, 0).inv(), Err(Error::DivisionByZero)));
    }

    #[test]
    fn mismatch_and_range() {
        assert!(matches!(
            fe(3, 1).checked_add(fe(5, 1)),
            Err(Error::FieldMismatch { left: 3, right: 5 })
        ));
        assert!(PrimeField::new(3).unwrap().element(3).is_err());
    }

    #[test]
    fn enumerate() {
        assert_eq!(PrimeField::new(2).unwrap().elements(), vec![0, 1]);
        assert_eq!(PrimeField::new(3).unwrap().elements(), vec![0, 1, 2]);
        assert_eq!(PrimeField::new(5).unwrap().elements().len(), 5);
    }

    #[test]
    fn axioms_exhaustive() {
        for q in [2u32, 3, 5, 7] {
            let f = PrimeField::new(q).unwrap();
            for a in f.elements() {
                assert_eq!(f.add(a, f.neg(a)), 0);
                if a != 0 {
                    assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
                }
                for b in f.elements() {
                    assert_eq!(f.sub(f.add(a, b), b), a);
                    for c in f.elements() {
                        assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
                    }
                }
            }
        }
    }
}
