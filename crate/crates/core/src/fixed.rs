//! Fixed-point numbers with three decimal places.
//!
//! Sensor values, preprocessed contributions and results all use this
//! representation: an `i64` count of thousandths, rendered as a decimal
//! string such as `"4.000"`. Extra input digits are rounded half-to-even.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const SCALE: i64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fixed(i64);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FixedError {
    #[error("invalid decimal {0:?}")]
    Invalid(String),
    #[error("value out of range")]
    Overflow,
}

impl Fixed {
    pub const ZERO: Fixed = Fixed(0);

    pub const fn from_milli(milli: i64) -> Self {
        Fixed(milli)
    }

    pub fn from_int(v: i64) -> Result<Self, FixedError> {
        v.checked_mul(SCALE).map(Fixed).ok_or(FixedError::Overflow)
    }

    /// Scales by 10^3 and rounds half-to-even.
    pub fn from_f64(v: f64) -> Result<Self, FixedError> {
        if !v.is_finite() {
            return Err(FixedError::Invalid(v.to_string()));
        }
        let scaled = (v * SCALE as f64).round_ties_even();
        if scaled.abs() >= i64::MAX as f64 {
            return Err(FixedError::Overflow);
        }
        Ok(Fixed(scaled as i64))
    }

    pub const fn milli(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }

    pub fn checked_add(self, other: Fixed) -> Option<Fixed> {
        self.0.checked_add(other.0).map(Fixed)
    }

    /// Exact sum; `None` on overflow.
    pub fn checked_sum<I: IntoIterator<Item = Fixed>>(iter: I) -> Option<Fixed> {
        iter.into_iter()
            .try_fold(Fixed::ZERO, |acc, v| acc.checked_add(v))
    }

    /// Mean rounded half-to-even to the nearest thousandth.
    pub fn mean(values: &[Fixed]) -> Option<Fixed> {
        if values.is_empty() {
            return None;
        }
        let total: i128 = values.iter().map(|v| v.0 as i128).sum();
        let q = div_round_half_even(total, values.len() as i128);
        i64::try_from(q).ok().map(Fixed)
    }
}

/// `num / den` rounded to nearest, ties to even. `den` must be positive.
pub(crate) fn div_round_half_even(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => {
            if q % 2 == 0 {
                q
            } else {
                q + 1
            }
        }
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(
            f,
            "{sign}{}.{:03}",
            abs / SCALE as u64,
            abs % SCALE as u64
        )
    }
}

impl FromStr for Fixed {
    type Err = FixedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || FixedError::Invalid(s.to_owned());
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(invalid());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(invalid());
        }
        let mut acc: i128 = 0;
        for b in int_part.bytes() {
            acc = acc * 10 + (b - b'0') as i128;
            if acc > i64::MAX as i128 {
                return Err(FixedError::Overflow);
            }
        }
        let mut milli = acc * SCALE as i128;
        let digits = frac_part.as_bytes();
        let mut frac: i128 = 0;
        for i in 0..3 {
            frac = frac * 10 + digits.get(i).map_or(0, |b| (b - b'0') as i128);
        }
        milli += frac;
        if digits.len() > 3 {
            // Round on the remaining digits: compare the tail against one half.
            let tail = &digits[3..];
            let first = tail[0] - b'0';
            let rest_nonzero = tail[1..].iter().any(|&b| b != b'0');
            let round_up = match first.cmp(&5) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => rest_nonzero || milli % 2 == 1,
            };
            if round_up {
                milli += 1;
            }
        }
        if neg {
            milli = -milli;
        }
        i64::try_from(milli)
            .map(Fixed)
            .map_err(|_| FixedError::Overflow)
    }
}

impl Serialize for Fixed {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fixed {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
