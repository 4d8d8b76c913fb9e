//! Core of the eWallet mobile-money platform.
//!
//! Everything in this crate is pure state manipulation: the double-entry
//! [`ledger`], the subscriber [`identity`] registry, the money-moving
//! [`engine`], the `#555*` [`ussd`] menu state machine and in-process
//! simulated [`providers`]. Durability, wall-clock time and entropy are
//! injected through [`ledger::JournalSink`], [`time::Clock`] and
//! [`rand_core::RngCore`], so the crate builds under `#![no_std]` with
//! `alloc`.

#![no_std]

extern crate alloc;

pub mod digest;
pub mod engine;
pub mod error;
pub mod identity;
pub mod ledger;
pub mod money;
pub mod msisdn;
pub mod providers;
pub mod time;
pub mod ussd;

pub use engine::{Engine, EngineConfig};
pub use error::{Error, ErrorCode, FieldReason, Result};
pub use ledger::{AccountId, AccountKind, EntryType, JournalEntry, Ledger, Posting};
pub use money::{Currency, Money};
pub use ussd::{Screen, Ussd, UssdConfig};
