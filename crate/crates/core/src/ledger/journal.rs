use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::AccountId;
use crate::digest::sha256_hex;
use crate::money::Currency;
use crate::time::Timestamp;

/// String-keyed annotations carried by every journal line.
pub type Meta = BTreeMap<String, String>;

/// Meta key under which the ledger records an entry's idempotency key.
pub const IDEMPOTENCY_KEY: &str = "idempotency_key";
/// Meta key naming the event of a meta-only (`REGISTRATION_MARKER`) record.
pub const EVENT: &str = "event";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntryType {
    P2p,
    WalletToBank,
    BankToBank,
    Recharge,
    WithdrawalHold,
    Redemption,
    MerchantPayment,
    Fee,
    Reversal,
    RegistrationMarker,
}

impl EntryType {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryType::P2p => "P2P",
            EntryType::WalletToBank => "WALLET_TO_BANK",
            EntryType::BankToBank => "BANK_TO_BANK",
            EntryType::Recharge => "RECHARGE",
            EntryType::WithdrawalHold => "WITHDRAWAL_HOLD",
            EntryType::Redemption => "REDEMPTION",
            EntryType::MerchantPayment => "MERCHANT_PAYMENT",
            EntryType::Fee => "FEE",
            EntryType::Reversal => "REVERSAL",
            EntryType::RegistrationMarker => "REGISTRATION_MARKER",
        }
    }

    /// Meta-only audit records carry no postings.
    pub fn is_marker(self) -> bool {
        self == EntryType::RegistrationMarker
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Posting {
    pub account: AccountId,
    pub delta_minor: i64,
    pub currency: Currency,
}

impl Posting {
    pub fn new(account: AccountId, delta_minor: i64, currency: Currency) -> Self {
        Self {
            account,
            delta_minor,
            currency,
        }
    }
}

/// One line of the journal file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JournalEntry {
    pub seq: u64,
    pub ts: Timestamp,
    pub txn_id: String,
    #[serde(rename = "type")]
    pub entry_type: EntryType,
    pub postings: Vec<Posting>,
    pub meta: Meta,
}

impl JournalEntry {
    pub fn touches(&self, account: &AccountId) -> bool {
        self.postings.iter().any(|p| &p.account == account)
    }

    pub fn delta_for(&self, account: &AccountId) -> i64 {
        self.postings
            .iter()
            .filter(|p| &p.account == account)
            .map(|p| p.delta_minor)
            .sum()
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn idempotency_key(&self) -> Option<&str> {
        self.meta(IDEMPOTENCY_KEY)
    }
}

/// A not-yet-sequenced entry as submitted by the engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewEntry {
    pub entry_type: EntryType,
    pub txn_id: String,
    pub postings: Vec<Posting>,
    pub meta: Meta,
}

/// Payload identity used for idempotent replay: entry type, postings and
/// meta minus the idempotency key itself. The txn id is excluded since
/// callers mint a fresh one per attempt.
pub fn payload_fingerprint(entry_type: EntryType, postings: &[Posting], meta: &Meta) -> String {
    let mut parts: Vec<String> = Vec::with_capacity(1 + postings.len() + meta.len());
    parts.push(String::from(entry_type.as_str()));
    for p in postings {
        parts.push(alloc::format!("{}|{}|{}", p.account, p.delta_minor, p.currency));
    }
    for (k, v) in meta.iter().filter(|(k, _)| k.as_str() != IDEMPOTENCY_KEY) {
        parts.push(alloc::format!("{}={}", k.len(), k));
        parts.push(v.clone());
    }
    let refs: Vec<&[u8]> = parts.iter().map(|s| s.as_bytes()).collect();
    sha256_hex(&refs)
}
