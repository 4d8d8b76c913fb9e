//! Integer minor-unit money. Rendering with a currency symbol ("R550")
//! happens only when text is produced for a screen or an SMS.

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, ErrorCode, Result};

/// ISO-4217 style three-letter code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Currency([u8; 3]);

impl Currency {
    pub const ZAR: Currency = Currency(*b"ZAR");
    pub const USD: Currency = Currency(*b"USD");
    pub const CDF: Currency = Currency(*b"CDF");

    pub fn as_str(&self) -> &str {
        // constructed only from ASCII uppercase
        core::str::from_utf8(&self.0).unwrap_or("???")
    }

    pub fn symbol(&self) -> &str {
        match &self.0 {
            b"ZAR" => "R",
            b"USD" => "$",
            b"CDF" => "FC",
            _ => self.as_str(),
        }
    }
}

impl Default for Currency {
    fn default() -> Self {
        Currency::ZAR
    }
}

impl FromStr for Currency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let b = s.as_bytes();
        if b.len() != 3 || !b.iter().all(u8::is_ascii_uppercase) {
            return Err(Error::with_message(
                ErrorCode::InvalidRequest,
                format!("invalid currency code {s:?}"),
            ));
        }
        Ok(Currency([b[0], b[1], b[2]]))
    }
}

impl fmt::Display for Currency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Currency {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Currency {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Money {
    pub amount_minor: i64,
    pub currency: Currency,
}

impl Money {
    pub const fn new(amount_minor: i64, currency: Currency) -> Self {
        Self { amount_minor, currency }
    }

    pub const fn zero(currency: Currency) -> Self {
        Self::new(0, currency)
    }

    /// "R550", "R275.50", "-R10". Whole amounts drop the cents.
    pub fn render(&self) -> String {
        let sign = if self.amount_minor < 0 { "-" } else { "" };
        let abs = self.amount_minor.unsigned_abs();
        let (major, minor) = (abs / 100, abs % 100);
        if minor == 0 {
            format!("{sign}{}{major}", self.currency.symbol())
        } else {
            format!("{sign}{}{major}.{minor:02}", self.currency.symbol())
        }
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Parses a keyed-in major-unit amount ("550", "275.5", "275.50") into
/// minor units. Rejects signs, separators and more than two decimals.
pub fn parse_major_units(input: &str) -> Option<i64> {
    let input = input.trim();
    let (whole, frac) = match input.split_once('.') {
        Some((w, f)) => (w, f),
        None => (input, ""),
    };
    if whole.is_empty() || whole.len() > 12 || frac.len() > 2 {
        return None;
    }
    if !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if input.ends_with('.') {
        return None;
    }
    let whole: i64 = whole.parse().ok()?;
    let frac: i64 = match frac.len() {
        0 => 0,
        1 => frac.parse::<i64>().ok()? * 10,
        _ => frac.parse().ok()?,
    };
    whole.checked_mul(100)?.checked_add(frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_like_the_receiver_menu() {
        assert_eq!(Money::new(55_000, Currency::ZAR).render(), "R550");
        assert_eq!(Money::new(27_550, Currency::ZAR).render(), "R275.50");
        assert_eq!(Money::new(5, Currency::ZAR).render(), "R0.05");
        assert_eq!(Money::new(100, Currency::USD).render(), "$1");
        assert_eq!(Money::new(-1000, Currency::CDF).render(), "-FC10");
    }

    #[test]
    fn parses_keyed_amounts() {
        assert_eq!(parse_major_units("550"), Some(55_000));
        assert_eq!(parse_major_units(" 275.5 "), Some(27_550));
        assert_eq!(parse_major_units("275.50"), Some(27_550));
        assert_eq!(parse_major_units("0"), Some(0));
        for bad in ["", "-5", "1,000", "1.234", "abc", ".5", "5.", "1e3"] {
            assert_eq!(parse_major_units(bad), None, "{bad}");
        }
    }

    #[test]
    fn currency_codes() {
        assert_eq!("CDF".parse::<Currency>().unwrap(), Currency::CDF);
        assert!("zar".parse::<Currency>().is_err());
        assert!("ZARR".parse::<Currency>().is_err());
    }
}
