//! Arithmetic in the prime field of order 2^61 - 1.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Sub};

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::fixed::Fixed;

/// The Mersenne prime 2^61 - 1.
pub const MODULUS: u64 = (1 << 61) - 1;

/// Largest magnitude representable as a signed value: (p - 1) / 2.
pub const HALF: u64 = (MODULUS - 1) / 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FieldElement(u64);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);

    pub fn new(v: u64) -> Self {
        FieldElement(v % MODULUS)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        FieldElement(rng.gen_range(0..MODULUS))
    }

    /// Embeds a signed fixed-point value; negative values wrap to `p - |v|`.
    ///
    /// Callers must ensure `|v| <= HALF`.
    pub fn embed(v: Fixed) -> Self {
        let m = v.milli();
        debug_assert!(m.unsigned_abs() <= HALF);
        if m >= 0 {
            FieldElement(m as u64)
        } else {
            FieldElement(MODULUS - m.unsigned_abs())
        }
    }

    /// Inverse of [`FieldElement::embed`] on the symmetric range.
    pub fn decode(self) -> Fixed {
        if self.0 <= HALF {
            Fixed::from_milli(self.0 as i64)
        } else {
            Fixed::from_milli(-((MODULUS - self.0) as i64))
        }
    }
}

impl Add for FieldElement {
    type Output = FieldElement;

    fn add(self, rhs: Self) -> Self {
        let s = self.0 + rhs.0;
        FieldElement(if s >= MODULUS { s - MODULUS } else { s })
    }
}

impl Sub for FieldElement {
    type Output = FieldElement;

    fn sub(self, rhs: Self) -> Self {
        FieldElement(if self.0 >= rhs.0 {
            self.0 - rhs.0
        } else {
            self.0 + MODULUS - rhs.0
        })
    }
}

impl Sum for FieldElement {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(FieldElement::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl Serialize for FieldElement {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FieldElement {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 16 || !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(serde::de::Error::custom("field element must be 16 lower-case hex digits"));
        }
        let v = u64::from_str_radix(&s, 16).map_err(serde::de::Error::custom)?;
        if v >= MODULUS {
            return Err(serde::de::Error::custom("field element out of range"));
        }
        Ok(FieldElement(v))
    }
}
