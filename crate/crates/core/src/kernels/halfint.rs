use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A point of the shifted lattice Z' = Z + 1/2, stored as its (odd) double.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfInt {
    twice: i64,
}

impl HalfInt {
    pub fn from_twice(twice: i64) -> Result<Self> {
        if twice.rem_euclid(2) != 1 {
            return Err(Error::InvalidInput(format!("{twice}/2 is not a half-integer")));
        }
        Ok(HalfInt { twice })
    }

    /// n + 1/2.
    pub const fn above(n: i64) -> Self {
        HalfInt { twice: 2 * n + 1 }
    }

    /// n - 1/2.
    pub const fn below(n: i64) -> Self {
        HalfInt { twice: 2 * n - 1 }
    }

    pub const fn twice(self) -> i64 {
        self.twice
    }

    pub fn value(self) -> f64 {
        self.twice as f64 / 2.0
    }

    /// self - 1/2
    pub const fn floor(self) -> i64 {
        (self.twice - 1) / 2
    }

    /// self + 1/2
    pub const fn ceil(self) -> i64 {
        self.floor() + 1
    }

    pub const fn shift(self, k: i64) -> Self {
        HalfInt {
            twice: self.twice + 2 * k,
        }
    }

    pub const fn succ(self) -> Self {
        self.shift(1)
    }

    pub const fn pred(self) -> Self {
        self.shift(-1)
    }

    /// self - other, an integer.
    pub const fn minus(self, other: HalfInt) -> i64 {
        (self.twice - other.twice) / 2
    }

    /// self + other, an integer.
    pub const fn plus(self, other: HalfInt) -> i64 {
        (self.twice + other.twice) / 2
    }

    /// Inclusive lattice range with unit step.
    pub fn range(lo: HalfInt, hi: HalfInt) -> impl Iterator<Item = HalfInt> + Clone {
        let n = if hi < lo { 0 } else { hi.minus(lo) + 1 };
        (0..n).map(move |k| lo.shift(k))
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt { twice: -self.twice }
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/2", self.twice)
    }
}

impl FromStr for HalfInt {
    type Err = Error;

    /// Accepts "p/2" with p odd.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let (num, den) = t
            .split_once('/')
            .ok_or_else(|| Error::InvalidInput(format!("expected p/2, got {t:?}")))?;
        if den.trim() != "2" {
            return Err(Error::InvalidInput(format!("expected denominator 2 in {t:?}")));
        }
        let p: i64 = num
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad numerator in {t:?}")))?;
        HalfInt::from_twice(p)
    }
}

impl Serialize for HalfInt {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HalfInt {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
