//! CUSIP identifiers and the issuer-level CUSIP6 prefix.
//!
//! A CUSIP has the layout `AAAAAABBC`: six issuer characters, a two-character
//! issue number and a check digit. Holdings are aggregated at issuer level.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Six-character issuer identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cusip6([u8; 6]);

impl Cusip6 {
    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("ascii alphanumeric")
    }
}

impl FromStr for Cusip6 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes = s.as_bytes();
        if bytes.len() != 6 {
            return Err(Error::InvalidArgument(format!(
                "CUSIP6 must be 6 characters, got {s:?}"
            )));
        }
        if !bytes.iter().all(|b| b.is_ascii_alphanumeric()) {
            return Err(Error::CusipCharacter(s.to_string()));
        }
        let mut out = [0u8; 6];
        for (o, b) in out.iter_mut().zip(bytes) {
            *o = b.to_ascii_uppercase();
        }
        Ok(Self(out))
    }
}

impl fmt::Display for Cusip6 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Cusip6 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cusip6({})", self.as_str())
    }
}

impl Serialize for Cusip6 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Cusip6 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Full nine-character CUSIP.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cusip9([u8; 9]);

impl Cusip9 {
    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("ascii alphanumeric")
    }

    pub fn issuer(&self) -> Cusip6 {
        let mut out = [0u8; 6];
        out.copy_from_slice(&self.0[..6]);
        Cusip6(out)
    }

    /// Whether the ninth character is the check digit of the first eight.
    pub fn has_valid_check_digit(&self) -> bool {
        check_digit(&self.as_str()[..8]) == Some(self.0[8] as char)
    }
}

impl FromStr for Cusip9 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes = s.as_bytes();
        if bytes.len() != 9 {
            return Err(Error::CusipLength(s.chars().count()));
        }
        if !bytes.iter().all(|b| b.is_ascii_alphanumeric()) {
            return Err(Error::CusipCharacter(s.to_string()));
        }
        let mut out = [0u8; 9];
        for (o, b) in out.iter_mut().zip(bytes) {
            *o = b.to_ascii_uppercase();
        }
        Ok(Self(out))
    }
}

impl fmt::Display for Cusip9 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Cusip9 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cusip9({})", self.as_str())
    }
}

/// Check digit for the first eight CUSIP characters (modulus 10, double-add-double).
///
/// Digits keep their value, letters map to 10..=35, `*` `@` `#` to 36..=38.
/// Every second character is doubled and the decimal digits of all products
/// are summed. Returns `None` for an input that is not 8 valid characters.
pub fn check_digit(first8: &str) -> Option<char> {
    if first8.len() != 8 {
        return None;
    }
    let mut sum = 0u32;
    for (i, c) in first8.chars().enumerate() {
        let mut v = match c.to_ascii_uppercase() {
            '0'..='9' => c as u32 - '0' as u32,
            c @ 'A'..='Z' => c as u32 - 'A' as u32 + 10,
            '*' => 36,
            '@' => 37,
            '#' => 38,
            _ => return None,
        };
        if i % 2 == 1 {
            v *= 2;
        }
        sum += v / 10 + v % 10;
    }
    char::from_digit((10 - sum % 10) % 10, 10)
}

/// Issuer prefix of a nine-character CUSIP.
///
/// With `validate` set the check digit must verify as well; the default
/// pipeline leaves it off.
pub fn cusip6(cusip9: &str, validate: bool) -> Result<Cusip6> {
    let full: Cusip9 = cusip9.parse()?;
    if validate {
        let expected = check_digit(&full.as_str()[..8]).ok_or_else(|| {
            Error::CusipCharacter(cusip9.to_string())
        })?;
        let actual = full.0[8] as char;
        if expected != actual {
            return Err(Error::CusipCheckDigit {
                cusip: cusip9.to_string(),
                expected,
                actual,
            });
        }
    }
    Ok(full.issuer())
}
