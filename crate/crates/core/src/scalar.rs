//! Integer domain of the interpreter.
//!
//! The machine is generic over the integer type stored in σ and δ. The
//! default is [`num_bigint::BigInt`]; fixed-width types work too and report
//! overflow as a runtime error instead of wrapping.

use num_bigint::BigInt;
use num_traits::{CheckedAdd, CheckedSub, FromPrimitive, Num, One, Signed, ToPrimitive, Zero};
use std::fmt::{Debug, Display};
use std::hash::Hash;

pub trait Scalar:
    Clone
    + Debug
    + Display
    + Eq
    + Ord
    + Hash
    + Send
    + Sync
    + Zero
    + One
    + Signed
    + CheckedAdd
    + CheckedSub
    + ToPrimitive
    + FromPrimitive
    + 'static
{
    /// Convert a source literal; `None` when it does not fit.
    fn from_literal(lit: &BigInt) -> Option<Self>;

    fn parse_decimal(s: &str) -> Option<Self>;

    fn from_loc(loc: usize) -> Option<Self> {
        Self::from_usize(loc)
    }

    fn to_loc(&self) -> Option<usize> {
        self.to_usize()
    }
}

impl<T> Scalar for T
where
    T: Clone
        + Debug
        + Display
        + Eq
        + Ord
        + Hash
        + Send
        + Sync
        + Num
        + Signed
        + CheckedAdd
        + CheckedSub
        + ToPrimitive
        + FromPrimitive
        + 'static,
{
    fn from_literal(lit: &BigInt) -> Option<Self> {
        match lit.to_i64() {
            Some(small) => T::from_i64(small),
            None => T::from_str_radix(&lit.to_string(), 10).ok(),
        }
    }

    fn parse_decimal(s: &str) -> Option<Self> {
        T::from_str_radix(s, 10).ok()
    }
}

/// Serde adapter writing scalars as decimal strings.
pub mod dec {
    use super::Scalar;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<V: Scalar, S: Serializer>(v: &V, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, V: Scalar, D: Deserializer<'de>>(d: D) -> Result<V, D::Error> {
        let s = String::deserialize(d)?;
        V::parse_decimal(&s).ok_or_else(|| serde::de::Error::custom(format!("bad integer `{s}`")))
    }
}

/// Newtype serializing a scalar as a decimal string.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dec<V>(pub V);

impl<V: Scalar> serde::Serialize for Dec<V> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        dec::serialize(&self.0, s)
    }
}

impl<'de, V: Scalar> serde::Deserialize<'de> for Dec<V> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        dec::deserialize(d).map(Dec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_conversion() {
        let big: BigInt = "123456789012345678901234567890".parse().unwrap();
        assert_eq!(BigInt::from_literal(&big), Some(big.clone()));
        assert_eq!(i64::from_literal(&big), None);
        assert_eq!(i64::from_literal(&BigInt::from(-7)), Some(-7));
    }

    #[test]
    fn locations() {
        assert_eq!(BigInt::from_loc(12).unwrap().to_loc(), Some(12));
        assert_eq!((-1i64).to_loc(), None);
    }
}
