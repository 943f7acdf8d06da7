//! Primitive value types shared by every module: addresses, 256-bit amounts,
//! digests and exact rationals.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

uint::construct_uint! {
    /// Unsigned 256-bit integer used for every token and ETH amount.
    pub struct U256(4);
}

uint::construct_uint! {
    /// Wide intermediate for overflow-free `a * b / c` on [`U256`] operands.
    pub struct U512(8);
}

impl U256 {
    /// `10^18`, the base-unit scale of every 18-decimal token.
    pub fn ether() -> U256 {
        U256::exp10(18)
    }

    /// `whole * 10^18`.
    pub fn tokens(whole: u64) -> U256 {
        U256::from(whole) * U256::ether()
    }

    pub(crate) fn widen(self) -> U512 {
        let mut out = [0u64; 8];
        out[..4].copy_from_slice(&self.0);
        U512(out)
    }
}

pub(crate) fn narrow(v: U512) -> Option<U256> {
    if v.0[4..].iter().any(|w| *w != 0) {
        return None;
    }
    let mut out = [0u64; 4];
    out.copy_from_slice(&v.0[..4]);
    Some(U256(out))
}

/// Opaque 20-byte account or contract identifier. The zero address is
/// reserved and never owns assets.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0u8; 20]);

    /// Deterministic address derived from a human label.
    pub fn from_label(label: &str) -> Address {
        let digest = Sha256::digest(label.as_bytes());
        let mut out = [0u8; 20];
        out.copy_from_slice(&digest[..20]);
        Address(out)
    }

    pub fn is_zero(&self) -> bool {
        *self == Address::ZERO
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({self})")
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// 32-byte digest (user operation hashes, abstract signatures).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Hash32(pub [u8; 32]);

impl Hash32 {
    pub fn digest(bytes: &[u8]) -> Hash32 {
        Hash32(Sha256::digest(bytes).into())
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash32({self})")
    }
}

impl Serialize for Hash32 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Handle of an abstract signing key. A signature is `sha256(key || message)`,
/// which nobody without the key can produce inside the simulation.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SecretKey([u8; 32]);

impl SecretKey {
    pub fn from_label(label: &str) -> SecretKey {
        SecretKey(Sha256::digest(format!("key:{label}").as_bytes()).into())
    }

    pub fn sign(&self, message: &Hash32) -> Hash32 {
        let mut h = Sha256::new();
        h.update(self.0);
        h.update(message.0);
        Hash32(h.finalize().into())
    }

    pub fn verify(&self, message: &Hash32, signature: &Hash32) -> bool {
        self.sign(message) == *signature
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

/// Index of a token inside a [`crate::ledger::TokenLedger`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize)]
pub struct TokenId(pub u16);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("invalid amount {0:?}")]
    Amount(String),
    #[error("invalid rational {0:?}")]
    Rational(String),
}

/// Parses `"1500"`, `"5000e18"` or `"0.5e18"` into exact base units.
pub fn parse_amount(text: &str) -> Result<U256, ParseError> {
    let err = || ParseError::Amount(text.to_string());
    let text = text.trim().replace('_', "");
    let (mantissa, exp) = match text.split_once(['e', 'E']) {
        Some((m, e)) => (m.to_string(), e.parse::<usize>().map_err(|_| err())?),
        None => (text.clone(), 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((&mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if frac_part.len() > exp {
        return Err(err());
    }
    let digits = format!("{int_part}{frac_part}{}", "0".repeat(exp - frac_part.len()));
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    U256::from_dec_str(&digits).map_err(|_| err())
}

/// Serde adapter: amounts are written as decimal strings and read from either
/// integers or strings accepted by [`parse_amount`].
pub mod amount_serde {
    use super::*;

    pub fn serialize<S: Serializer>(v: &U256, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<U256, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(U256::from(v)),
            Raw::Text(t) => parse_amount(&t).map_err(serde::de::Error::custom),
        }
    }
}

/// Exact non-negative rational `num / den` with `den > 0`.
#[derive(Clone, Copy, Debug)]
pub struct Rational {
    num: U256,
    den: U256,
}

impl Rational {
    pub fn new(num: U256, den: U256) -> Option<Rational> {
        if den.is_zero() {
            None
        } else {
            Some(Rational { num, den })
        }
    }

    pub fn from_ints(num: u64, den: u64) -> Rational {
        Rational::new(U256::from(num), U256::from(den)).expect("nonzero denominator")
    }

    pub fn integer(v: u64) -> Rational {
        Rational::from_ints(v, 1)
    }

    pub fn num(&self) -> U256 {
        self.num
    }

    pub fn den(&self) -> U256 {
        self.den
    }

    pub fn is_positive(&self) -> bool {
        !self.num.is_zero()
    }

    /// `ceil(amount * self)`, `None` on overflow.
    pub fn mul_ceil(&self, amount: U256) -> Option<U256> {
        let wide = amount.widen() * self.num.widen();
        let den = self.den.widen();
        let q = (wide + den - U512::one()) / den;
        narrow(q)
    }

    /// `floor(amount * self)`, `None` on overflow.
    pub fn mul_floor(&self, amount: U256) -> Option<U256> {
        narrow(amount.widen() * self.num.widen() / self.den.widen())
    }

    /// `ceil(amount / self)`; `None` when `self` is zero or on overflow.
    pub fn div_ceil(&self, amount: U256) -> Option<U256> {
        self.recip()?.mul_ceil(amount)
    }

    pub fn recip(&self) -> Option<Rational> {
        Rational::new(self.den, self.num)
    }

    pub fn to_f64(&self) -> f64 {
        u256_to_f64(self.num) / u256_to_f64(self.den)
    }
}

impl PartialEq for Rational {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Rational {}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num.widen() * other.den.widen()).cmp(&(other.num.widen() * self.den.widen()))
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Rational {
    type Err = ParseError;

    /// Accepts `"3/2"`, `"1.1"` or `"7"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseError::Rational(s.to_string());
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let num = U256::from_dec_str(n.trim()).map_err(|_| err())?;
            let den = U256::from_dec_str(d.trim()).map_err(|_| err())?;
            return Rational::new(num, den).ok_or_else(err);
        }
        let (int_part, frac_part) = s.split_once('.').unwrap_or((s, ""));
        let digits = format!("{int_part}{frac_part}");
        if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let num = U256::from_dec_str(&digits).map_err(|_| err())?;
        Rational::new(num, U256::exp10(frac_part.len())).ok_or_else(err)
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Pair([u64; 2]),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(Rational::integer(v)),
            Raw::Pair([n, dn]) => Rational::new(U256::from(n), U256::from(dn))
                .ok_or_else(|| serde::de::Error::custom("zero denominator")),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Lossy conversion for reporting only.
pub fn u256_to_f64(v: U256) -> f64 {
    v.0.iter()
        .rev()
        .fold(0.0f64, |acc, limb| acc * 18_446_744_073_709_551_616.0 + *limb as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_scientific_amounts() {
        assert_eq!(parse_amount("5000e18").unwrap(), U256::tokens(5000));
        assert_eq!(parse_amount("0.5e18").unwrap(), U256::exp10(17) * 5);
        assert_eq!(parse_amount("1_000").unwrap(), U256::from(1000));
        assert!(parse_amount("0.123e2").is_err());
        assert!(parse_amount("abc").is_err());
    }

    #[test]
    fn rational_rounding() {
        let third = Rational::from_ints(1, 3);
        assert_eq!(third.mul_ceil(U256::from(10)), Some(U256::from(4)));
        assert_eq!(third.mul_floor(U256::from(10)), Some(U256::from(3)));
        assert_eq!(third.div_ceil(U256::from(10)), Some(U256::from(30)));
        assert!(Rational::integer(2).mul_ceil(U256::MAX).is_none());
        assert_eq!(Rational::from_ints(1, 1).mul_ceil(U256::MAX), Some(U256::MAX));
    }

    #[test]
    fn rational_parse_and_order() {
        let a: Rational = "1.1".parse().unwrap();
        assert_eq!(a, Rational::from_ints(11, 10));
        let b: Rational = "3/2".parse().unwrap();
        assert!(a < b);
        assert!("1/0".parse::<Rational>().is_err());
    }

    #[test]
    fn address_rendering() {
        let a = Address::from_label("alice");
        assert_eq!(a.to_string().len(), 40);
        assert_ne!(a, Address::from_label("bob"));
        assert!(Address::ZERO.is_zero());
    }
}
