//! Access codes (temporary PINs) and the book that tracks them.
//!
//! Codes are stored only as digests. State changes ride on the journal
//! entries that move the held money, so the book is rebuilt by replay.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, ErrorCode, Result};
use crate::ledger::Meta;
use crate::time::Timestamp;

pub const CODE_LEN: usize = 8;

pub(crate) mod keys {
    pub const EVENT: &str = "code_event";
    pub const ID: &str = "code_id";
    pub const DIGEST: &str = "code_digest";
    pub const HOLDER: &str = "code_holder";
    pub const AMOUNT: &str = "code_amount_minor";
    pub const EXPIRES_AT: &str = "code_expires_at";
    pub const ORIGIN: &str = "code_origin";
    pub const SENDER: &str = "code_sender";

    pub const ISSUED: &str = "issued";
    pub const REDEEMED: &str = "redeemed";
    pub const REFUNDED: &str = "refunded";
    pub const CANCELLED: &str = "cancelled";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CodeState {
    Issued,
    PartiallyRedeemed,
    Redeemed,
    Expired,
    Cancelled,
}

impl CodeState {
    pub fn as_str(self) -> &'static str {
        match self {
            CodeState::Issued => "ISSUED",
            CodeState::PartiallyRedeemed => "PARTIALLY_REDEEMED",
            CodeState::Redeemed => "REDEEMED",
            CodeState::Expired => "EXPIRED",
            CodeState::Cancelled => "CANCELLED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            CodeState::Issued,
            CodeState::PartiallyRedeemed,
            CodeState::Redeemed,
            CodeState::Expired,
            CodeState::Cancelled,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }

    pub fn is_live(self) -> bool {
        matches!(self, CodeState::Issued | CodeState::PartiallyRedeemed)
    }
}

/// Why a code exists: a withdrawal the holder asked for, or a transfer
/// parked for an unregistered recipient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CodeOrigin {
    Withdrawal,
    Parcel { sender: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessCode {
    pub id: String,
    #[serde(skip)]
    pub(crate) digest: String,
    pub holder: String,
    pub issued_amount: i64,
    pub remaining: i64,
    pub redeemed: i64,
    pub refunded: i64,
    pub expires_at: Timestamp,
    pub state: CodeState,
    pub hold_entry: u64,
    pub origin: CodeOrigin,
}

impl AccessCode {
    pub fn is_expired_at(&self, now: Timestamp) -> bool {
        now > self.expires_at
    }
}

pub fn code_digest(code: &str) -> String {
    sha256_hex(&[b"access-code", code.trim().as_bytes()])
}

/// What an entry does to a code, written into its meta.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum CodeEvent {
    Issued {
        id: String,
        digest: String,
        holder: String,
        amount: i64,
        expires_at: Timestamp,
        origin: CodeOrigin,
    },
    Redeemed {
        id: String,
        amount: i64,
    },
    Refunded {
        id: String,
        amount: i64,
    },
    Cancelled {
        id: String,
        amount: i64,
    },
}

impl CodeEvent {
    pub(crate) fn write(&self, meta: &mut Meta) {
        let mut put = |k: &str, v: String| {
            meta.insert(k.to_string(), v);
        };
        match self {
            CodeEvent::Issued {
                id,
                digest,
                holder,
                amount,
                expires_at,
                origin,
            } => {
                put(keys::EVENT, keys::ISSUED.into());
                put(keys::ID, id.clone());
                put(keys::DIGEST, digest.clone());
                put(keys::HOLDER, holder.clone());
                put(keys::AMOUNT, amount.to_string());
                put(keys::EXPIRES_AT, expires_at.to_rfc3339());
                match origin {
                    CodeOrigin::Withdrawal => put(keys::ORIGIN, "WITHDRAWAL".into()),
                    CodeOrigin::Parcel { sender } => {
                        put(keys::ORIGIN, "PARCEL".into());
                        put(keys::SENDER, sender.clone());
                    }
                }
            }
            CodeEvent::Redeemed { id, amount }
            | CodeEvent::Refunded { id, amount }
            | CodeEvent::Cancelled { id, amount } => {
                let ev = match self {
                    CodeEvent::Redeemed { .. } => keys::REDEEMED,
                    CodeEvent::Refunded { .. } => keys::REFUNDED,
                    _ => keys::CANCELLED,
                };
                put(keys::EVENT, ev.into());
                put(keys::ID, id.clone());
                put(keys::AMOUNT, amount.to_string());
            }
        }
    }

    pub(crate) fn read(meta: &Meta) -> Result<Option<Self>> {
        let Some(ev) = meta.get(keys::EVENT) else {
            return Ok(None);
        };
        let get = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| corrupt(format!("code record lacks {k:?}")))
        };
        let id = get(keys::ID)?;
        let amount: i64 = get(keys::AMOUNT)?
            .parse()
            .map_err(|_| corrupt("bad code amount".into()))?;
        Ok(Some(match ev.as_str() {
            keys::ISSUED => {
                let expires_at = chrono::DateTime::parse_from_rfc3339(&get(keys::EXPIRES_AT)?)
                    .map_err(|_| corrupt("bad code expiry".into()))?
                    .to_utc();
                let origin = match get(keys::ORIGIN)?.as_str() {
                    "WITHDRAWAL" => CodeOrigin::Withdrawal,
                    "PARCEL" => CodeOrigin::Parcel {
                        sender: get(keys::SENDER)?,
                    },
                    other => return Err(corrupt(format!("unknown code origin {other:?}"))),
                };
                CodeEvent::Issued {
                    id,
                    digest: get(keys::DIGEST)?,
                    holder: get(keys::HOLDER)?,
                    amount,
                    expires_at,
                    origin,
                }
            }
            keys::REDEEMED => CodeEvent::Redeemed { id, amount },
            keys::REFUNDED => CodeEvent::Refunded { id, amount },
            keys::CANCELLED => CodeEvent::Cancelled { id, amount },
            other => return Err(corrupt(format!("unknown code event {other:?}"))),
        }))
    }
}

fn corrupt(msg: String) -> Error {
    Error::with_message(ErrorCode::CorruptJournal, msg)
}

#[derive(Debug, Clone, Default)]
pub struct CodeBook {
    codes: BTreeMap<String, AccessCode>,
    by_digest: BTreeMap<String, Vec<String>>,
}

impl CodeBook {
    pub fn get(&self, id: &str) -> Option<&AccessCode> {
        self.codes.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AccessCode> {
        self.codes.values()
    }

    pub fn live(&self) -> impl Iterator<Item = &AccessCode> {
        self.codes.values().filter(|c| c.state.is_live())
    }

    pub fn live_total(&self) -> i64 {
        self.live().map(|c| c.remaining).sum()
    }

    /// Whether a live code already uses this digest.
    pub fn digest_in_use(&self, digest: &str) -> bool {
        self.by_digest
            .get(digest)
            .is_some_and(|ids| ids.iter().any(|id| self.codes[id].state.is_live()))
    }

    /// The code a holder typed in: a live one if any, otherwise the most
    /// recent spent one with those digits.
    pub fn lookup(&self, code: &str) -> Option<&AccessCode> {
        let ids = self.by_digest.get(&code_digest(code))?;
        ids.iter()
            .map(|id| &self.codes[id])
            .find(|c| c.state.is_live())
            .or_else(|| ids.last().map(|id| &self.codes[id]))
    }

    pub fn parcels_for(&self, holder: &str) -> impl Iterator<Item = &AccessCode> {
        let holder = holder.to_string();
        self.live()
            .filter(move |c| c.holder == holder && matches!(c.origin, CodeOrigin::Parcel { .. }))
    }

    pub(crate) fn check(&self, event: &CodeEvent) -> Result<()> {
        match event {
            CodeEvent::Issued { id, amount, .. } => {
                if self.codes.contains_key(id) {
                    return Err(corrupt(format!("code {id} issued twice")));
                }
                if *amount <= 0 {
                    return Err(corrupt(format!("code {id} issued for {amount}")));
                }
            }
            CodeEvent::Redeemed { id, amount }
            | CodeEvent::Refunded { id, amount }
            | CodeEvent::Cancelled { id, amount } => {
                let c = self
                    .codes
                    .get(id)
                    .ok_or_else(|| corrupt(format!("unknown code {id}")))?;
                if !c.state.is_live() || *amount <= 0 || *amount > c.remaining {
                    return Err(corrupt(format!("code {id} cannot give up {amount}")));
                }
                if !matches!(event, CodeEvent::Redeemed { .. }) && *amount != c.remaining {
                    return Err(corrupt(format!("code {id} must be closed out in full")));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn apply(&mut self, event: CodeEvent, hold_seq: u64) -> Result<()> {
        self.check(&event)?;
        match event {
            CodeEvent::Issued {
                id,
                digest,
                holder,
                amount,
                expires_at,
                origin,
            } => {
                self.by_digest.entry(digest.clone()).or_default().push(id.clone());
                self.codes.insert(
                    id.clone(),
                    AccessCode {
                        id,
                        digest,
                        holder,
                        issued_amount: amount,
                        remaining: amount,
                        redeemed: 0,
                        refunded: 0,
                        expires_at,
                        state: CodeState::Issued,
                        hold_entry: hold_seq,
                        origin,
                    },
                );
            }
            CodeEvent::Redeemed { id, amount } => {
                let c = self.codes.get_mut(&id).expect("checked");
                c.remaining -= amount;
                c.redeemed += amount;
                c.state = if c.remaining == 0 {
                    CodeState::Redeemed
                } else {
                    CodeState::PartiallyRedeemed
                };
            }
            CodeEvent::Refunded { id, amount } => {
                let c = self.codes.get_mut(&id).expect("checked");
                c.remaining -= amount;
                c.refunded += amount;
                c.state = CodeState::Expired;
            }
            CodeEvent::Cancelled { id, amount } => {
                let c = self.codes.get_mut(&id).expect("checked");
                c.remaining -= amount;
                c.refunded += amount;
                c.state = CodeState::Cancelled;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::{Clock, ManualClock};

    fn issue(book: &mut CodeBook, id: &str, code: &str, amount: i64) {
        let ev = CodeEvent::Issued {
            id: id.into(),
            digest: code_digest(code),
            holder: "27820000002".into(),
            amount,
            expires_at: ManualClock::at_default_epoch().now(),
            origin: CodeOrigin::Withdrawal,
        };
        let mut meta = Meta::new();
        ev.write(&mut meta);
        assert_eq!(CodeEvent::read(&meta).unwrap(), Some(ev.clone()));
        book.apply(ev, 1).unwrap();
    }

    #[test]
    fn partial_then_full_redemption() {
        let mut b = CodeBook::default();
        issue(&mut b, "ac1", "12345678", 55_000);
        b.apply(
            CodeEvent::Redeemed {
                id: "ac1".into(),
                amount: 27_500,
            },
            2,
        )
        .unwrap();
        let c = b.get("ac1").unwrap();
        assert_eq!((c.remaining, c.state), (27_500, CodeState::PartiallyRedeemed));
        b.apply(
            CodeEvent::Redeemed {
                id: "ac1".into(),
                amount: 27_500,
            },
            3,
        )
        .unwrap();
        let c = b.get("ac1").unwrap();
        assert_eq!((c.remaining, c.state), (0, CodeState::Redeemed));
        assert!(b
            .apply(
                CodeEvent::Redeemed {
                    id: "ac1".into(),
                    amount: 1
                },
                4
            )
            .is_err());
        assert_eq!(b.lookup("12345678").unwrap().id, "ac1");
        assert!(!b.digest_in_use(&code_digest("12345678")));
    }

    #[test]
    fn refunds_close_the_code_out() {
        let mut b = CodeBook::default();
        issue(&mut b, "ac1", "11112222", 1_000);
        b.apply(
            CodeEvent::Redeemed {
                id: "ac1".into(),
                amount: 400,
            },
            2,
        )
        .unwrap();
        assert!(b
            .apply(
                CodeEvent::Refunded {
                    id: "ac1".into(),
                    amount: 100
                },
                3
            )
            .is_err());
        b.apply(
            CodeEvent::Refunded {
                id: "ac1".into(),
                amount: 600,
            },
            3,
        )
        .unwrap();
        let c = b.get("ac1").unwrap();
        assert_eq!(c.redeemed + c.remaining + c.refunded, c.issued_amount);
        assert_eq!(c.state, CodeState::Expired);
    }

    #[test]
    fn lookup_prefers_live_code() {
        let mut b = CodeBook::default();
        issue(&mut b, "old", "99990000", 10);
        b.apply(
            CodeEvent::Redeemed {
                id: "old".into(),
                amount: 10,
            },
            2,
        )
        .unwrap();
        issue(&mut b, "new", "99990000", 20);
        assert_eq!(b.lookup("99990000").unwrap().id, "new");
        assert!(b.lookup("00000000").is_none());
        assert_eq!(b.live_total(), 20);
    }
}
