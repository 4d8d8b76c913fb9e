use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, ErrorCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AccountKind {
    Wallet,
    BankMirror,
    Suspense,
    FeeIncome,
}

impl AccountKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AccountKind::Wallet => "WALLET",
            AccountKind::BankMirror => "BANK_MIRROR",
            AccountKind::Suspense => "SUSPENSE",
            AccountKind::FeeIncome => "FEE_INCOME",
        }
    }

    /// Wallets and the suspense pool may never go negative. Bank mirrors
    /// shadow an external balance whose authority is the bank itself.
    pub fn is_protected(self) -> bool {
        matches!(self, AccountKind::Wallet | AccountKind::Suspense)
    }
}

/// `KIND:key`, e.g. `WALLET:27820000001`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AccountId {
    pub kind: AccountKind,
    pub key: String,
}

pub const SUSPENSE_KEY: &str = "EWALLET-POOL";
pub const FEE_INCOME_KEY: &str = "EWALLET-FEES";
pub const ATM_CASH_POOL_KEY: &str = "ATM-CASH-POOL";

impl AccountId {
    pub fn wallet(msisdn: &str) -> Self {
        Self {
            kind: AccountKind::Wallet,
            key: msisdn.to_string(),
        }
    }

    pub fn bank_mirror(number: &str) -> Self {
        Self {
            kind: AccountKind::BankMirror,
            key: number.to_string(),
        }
    }

    pub fn suspense() -> Self {
        Self {
            kind: AccountKind::Suspense,
            key: SUSPENSE_KEY.to_string(),
        }
    }

    pub fn fee_income() -> Self {
        Self {
            kind: AccountKind::FeeIncome,
            key: FEE_INCOME_KEY.to_string(),
        }
    }

    /// Where cash handed out by ATMs is booked.
    pub fn atm_cash_pool() -> Self {
        Self::bank_mirror(ATM_CASH_POOL_KEY)
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.key)
    }
}

impl FromStr for AccountId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = || Error::with_message(ErrorCode::UnknownAccount, format!("malformed account id {s:?}"));
        let (kind, key) = s.split_once(':').ok_or_else(bad)?;
        let kind = match kind {
            "WALLET" => AccountKind::Wallet,
            "BANK_MIRROR" => AccountKind::BankMirror,
            "SUSPENSE" => AccountKind::Suspense,
            "FEE_INCOME" => AccountKind::FeeIncome,
            _ => return Err(bad()),
        };
        if key.is_empty() {
            return Err(bad());
        }
        Ok(Self {
            kind,
            key: key.to_string(),
        })
    }
}

impl Serialize for AccountId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AccountId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse() {
        let id = AccountId::wallet("27820000001");
        assert_eq!(id.to_string(), "WALLET:27820000001");
        assert_eq!("WALLET:27820000001".parse::<AccountId>().unwrap(), id);
        assert_eq!(AccountId::suspense().to_string(), "SUSPENSE:EWALLET-POOL");
        assert!("NOPE:1".parse::<AccountId>().is_err());
        assert!("WALLET:".parse::<AccountId>().is_err());
    }
}
