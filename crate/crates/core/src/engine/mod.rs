//! The money-moving engine.
//!
//! [`Engine`] composes the ledger, the subscriber registry, the access-code
//! book and the providers. Every state change is journaled first and then
//! applied, so [`Engine::restore`] can rebuild everything (including the
//! simulated bank's balances and the idempotency table) from the journal.

mod accounts;
mod codes;
mod fees;
mod transaction;
mod transfers;

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use chrono::TimeDelta;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

pub use accounts::{
    Application, DeregistrationOutcome, DetailsOutcome, LoginGrant, PinRetrieval, RegistrationReceipt, UnlockOutcome,
};
pub use codes::{code_digest, AccessCode, CodeBook, CodeOrigin, CodeState, CODE_LEN};
pub use fees::FeeSchedule;
pub use transaction::{Outcome, RedemptionReceipt, Transaction, TxnKind, TxnState, WithdrawalReceipt};
pub use transfers::{CodeTarget, FundingSource, MerchantFunding};

use crate::digest::{random_hex, sha256_hex};
use crate::error::{Error, ErrorCode, Result};
use crate::identity::{Registry, RegistryEvent};
use crate::ledger::{
    AccountId, JournalEntry, JournalSink, Ledger, Meta, NewEntry, NullSink, EVENT, OPEN_ACCOUNT_EVENT,
};
use crate::money::{Currency, Money};
use crate::msisdn;
use crate::providers::{
    Bank, EftDirection, ProviderEvent, Providers, SeedFixture, SimulatedBank, SimulatedTelco, Sms, SmsOutbox, Telco,
};
use crate::time::{Clock, Timestamp};
use codes::CodeEvent;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub currency: Currency,
    pub fees: FeeSchedule,
    pub code_ttl: TimeDelta,
    pub lock_threshold: u32,
    pub service_code: String,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            currency: Currency::ZAR,
            fees: FeeSchedule::default(),
            code_ttl: TimeDelta::hours(72),
            lock_threshold: 3,
            service_code: "#555*".into(),
        }
    }
}

/// Meta keys carried by money-moving journal entries.
pub(crate) mod keys {
    pub const OP: &str = "op";
    pub const KIND: &str = "txn_kind";
    pub const SENDER: &str = "sender";
    pub const RECIPIENT: &str = "recipient";
    pub const AMOUNT: &str = "amount_minor";
    pub const FEE: &str = "fee_minor";
    pub const REQUEST_FP: &str = "request_fp";
    pub const SOURCE: &str = "source";
    pub const REASON: &str = "reason";
    pub const CODE_REMAINING_AFTER: &str = "code_remaining_after";
    pub const CODE_STATE_AFTER: &str = "code_state_after";
}

/// Money-moving operations that honour idempotency keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Op {
    P2p,
    WalletToBank,
    BankToBank,
    Recharge,
    Withdrawal,
    AtmRedeem,
    MerchantPayment,
    CodeTransfer,
}

impl Op {
    pub(crate) fn as_str(self) -> &'static str {
        match self {
            Op::P2p => "P2P",
            Op::WalletToBank => "WALLET_TO_BANK",
            Op::BankToBank => "BANK_TO_BANK",
            Op::Recharge => "RECHARGE",
            Op::Withdrawal => "WITHDRAWAL",
            Op::AtmRedeem => "ATM_REDEEM",
            Op::MerchantPayment => "MERCHANT_PAYMENT",
            Op::CodeTransfer => "CODE_TRANSFER",
        }
    }
}

pub(crate) fn request_fp(op: Op, parts: &[&str]) -> String {
    let mut all: Vec<&[u8]> = Vec::with_capacity(parts.len() + 1);
    all.push(op.as_str().as_bytes());
    all.extend(parts.iter().map(|p| p.as_bytes()));
    sha256_hex(&all)
}

/// How a balance check is delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Delivery {
    Display,
    Sms,
}

const MAX_FAILURE_LOG: usize = 1024;

pub struct Engine<T = SimulatedTelco, B = SimulatedBank, S = SmsOutbox> {
    config: EngineConfig,
    ledger: Ledger,
    registry: Registry,
    providers: Providers<T, B, S>,
    codes: CodeBook,
    completed: BTreeMap<String, (String, Outcome)>,
    incoming: BTreeMap<String, i64>,
    failures: Vec<Transaction>,
    undeliverable: u64,
    clock: Arc<dyn Clock>,
    rng: Box<dyn RngCore + Send>,
}

impl Engine {
    /// Simulated providers and an in-memory journal.
    pub fn simulated(config: EngineConfig, clock: Arc<dyn Clock>, rng: Box<dyn RngCore + Send>) -> Self {
        Engine::new(config, Providers::default(), clock, rng, Box::new(NullSink))
    }
}

impl<T: Telco, B: Bank, S: Sms> Engine<T, B, S> {
    pub fn new(
        config: EngineConfig,
        providers: Providers<T, B, S>,
        clock: Arc<dyn Clock>,
        rng: Box<dyn RngCore + Send>,
        sink: Box<dyn JournalSink>,
    ) -> Self {
        Self {
            ledger: Ledger::new(config.currency, sink),
            registry: Registry::new(config.lock_threshold),
            providers,
            codes: CodeBook::default(),
            completed: BTreeMap::new(),
            incoming: BTreeMap::new(),
            failures: Vec::new(),
            undeliverable: 0,
            clock,
            rng,
            config,
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn providers(&self) -> &Providers<T, B, S> {
        &self.providers
    }

    pub fn providers_mut(&mut self) -> &mut Providers<T, B, S> {
        &mut self.providers
    }

    pub fn codes(&self) -> &CodeBook {
        &self.codes
    }

    /// Transactions that ended FAILED, oldest first (bounded).
    pub fn failures(&self) -> &[Transaction] {
        &self.failures
    }

    pub fn undeliverable_sms(&self) -> u64 {
        self.undeliverable
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn set_sink(&mut self, sink: Box<dyn JournalSink>) {
        self.ledger.set_sink(sink);
    }

    pub fn money(&self, minor: i64) -> Money {
        Money::new(minor, self.config.currency)
    }

    pub fn wallet_balance(&self, msisdn: &str) -> i64 {
        self.ledger
            .balance(&AccountId::wallet(msisdn))
            .map(|m| m.amount_minor)
            .unwrap_or(0)
    }

    /// Unacknowledged incoming transfers to a registered wallet.
    pub fn incoming_for(&self, msisdn: &str) -> i64 {
        self.incoming.get(msisdn).copied().unwrap_or(0)
    }

    pub fn clear_incoming(&mut self, msisdn: &str) {
        self.incoming.remove(msisdn);
    }

    /// Σ remaining over live parcels waiting for `msisdn`.
    pub fn parked_for(&self, msisdn: &str) -> i64 {
        self.codes.parcels_for(msisdn).map(|c| c.remaining).sum()
    }

    /// Rebuilds state from one journal line read back from storage.
    pub fn restore(&mut self, entry: JournalEntry) -> Result<()> {
        self.restore_inner(entry).map_err(|e| {
            if e.code == ErrorCode::CorruptJournal {
                e
            } else {
                Error::with_message(ErrorCode::CorruptJournal, e.message)
            }
        })
    }

    fn restore_inner(&mut self, entry: JournalEntry) -> Result<()> {
        if entry.entry_type.is_marker() {
            let registry_event = if RegistryEvent::is_registry_event(&entry.meta) {
                let ev = RegistryEvent::from_meta(&entry.meta)?;
                self.registry.check(&ev)?;
                Some(ev)
            } else {
                None
            };
            let provider_event = if ProviderEvent::is_provider_event(&entry.meta) {
                Some(ProviderEvent::from_meta(&entry.meta)?)
            } else {
                None
            };
            let known =
                registry_event.is_some() || provider_event.is_some() || entry.meta(EVENT) == Some(OPEN_ACCOUNT_EVENT);
            if !known {
                return Err(Error::with_message(ErrorCode::CorruptJournal, "unknown marker event"));
            }
            self.ledger.restore(entry)?;
            if let Some(ev) = registry_event {
                self.registry.apply(&ev)?;
            }
            if let Some(ev) = provider_event {
                self.providers.apply(&ev)?;
            }
            return Ok(());
        }

        let code_event = CodeEvent::read(&entry.meta)?;
        if let Some(ev) = &code_event {
            self.codes.check(ev)?;
        }
        let completed = match (
            entry.meta(keys::OP),
            entry.idempotency_key(),
            entry.meta(keys::REQUEST_FP),
        ) {
            (Some(_), Some(key), Some(fp)) => Some((key.to_string(), fp.to_string(), self.outcome_from_entry(&entry)?)),
            _ => None,
        };
        let seq = entry.seq;
        let mirrors: Vec<(String, i64)> = entry
            .postings
            .iter()
            .filter(|p| {
                p.account.kind == crate::ledger::AccountKind::BankMirror && p.account != AccountId::atm_cash_pool()
            })
            .map(|p| (p.account.key.clone(), p.delta_minor))
            .collect();
        let txn_id = entry.txn_id.clone();
        self.ledger.restore(entry)?;
        if let Some(ev) = code_event {
            self.codes.apply(ev, seq)?;
        }
        for (account, delta) in mirrors {
            let dir = if delta > 0 {
                EftDirection::Credit
            } else {
                EftDirection::Debit
            };
            self.providers.bank.replay_eft(dir, &account, delta.abs(), &txn_id)?;
        }
        if let Some((key, fp, outcome)) = completed {
            self.completed.insert(key, (fp, outcome));
        }
        Ok(())
    }

    /// Provisions telco numbers and bank accounts; journaled so restarts
    /// see the same providers.
    pub fn seed(&mut self, fixture: &SeedFixture) -> Result<usize> {
        let mut events = Vec::new();
        for m in &fixture.msisdns {
            let normalized = msisdn::normalize(&m.msisdn).ok_or_else(|| {
                Error::with_message(ErrorCode::InvalidRequest, format!("malformed msisdn {:?}", m.msisdn))
            })?;
            events.push(ProviderEvent::MsisdnProvisioned(crate::providers::SeedMsisdn {
                msisdn: normalized,
                carrier: m.carrier.clone(),
            }));
        }
        for b in &fixture.bank_accounts {
            if b.balance_minor < 0 || b.number.trim().is_empty() {
                return Err(Error::with_message(
                    ErrorCode::InvalidRequest,
                    format!("bad bank account {:?}", b.number),
                ));
            }
            events.push(ProviderEvent::BankAccountProvisioned(b.clone()));
        }
        for ev in &events {
            let id = self.new_id("seed");
            self.ledger.append_marker(id, ev.to_meta(), self.now())?;
            self.providers.apply(ev)?;
        }
        Ok(events.len())
    }

    pub fn check_balance(&mut self, msisdn: &str, delivery: Delivery) -> Result<Money> {
        let m = msisdn::normalize(msisdn).ok_or_else(|| Error::new(ErrorCode::UnknownMsisdn))?;
        let s = self.registry.get(&m)?;
        if s.status == crate::identity::Status::Locked {
            return Err(Error::new(ErrorCode::AccountLocked));
        }
        let balance = self.ledger.balance(&AccountId::wallet(&m))?;
        if delivery == Delivery::Sms {
            self.notify(&m, &format!("Your eWallet balance is {}.", balance.render()));
        }
        Ok(balance)
    }

    /// Journal entries touching a subscriber's wallet. Closed wallets are
    /// visible to administrators only.
    pub fn statement(&self, msisdn: &str, from_seq: u64, to_seq: u64, as_admin: bool) -> Result<Vec<JournalEntry>> {
        let m = msisdn::normalize(msisdn).ok_or_else(|| Error::new(ErrorCode::UnknownMsisdn))?;
        if !as_admin {
            self.registry.get(&m)?;
        } else if !self.registry.is_registered(&m) && !self.registry.was_closed(&m) {
            return Err(Error::new(ErrorCode::UnknownMsisdn));
        }
        self.ledger.statement(&AccountId::wallet(&m), from_seq, to_seq)
    }

    /// Refunds every live code past its expiry. Returns how many expired.
    pub fn expire_codes(&mut self, now: Timestamp) -> usize {
        let due: Vec<String> = self
            .codes
            .live()
            .filter(|c| c.is_expired_at(now))
            .map(|c| c.id.clone())
            .collect();
        due.iter().filter(|id| self.expire_code(id).is_ok()).count()
    }

    fn expire_code(&mut self, id: &str) -> Result<()> {
        let code = self
            .codes
            .get(id)
            .cloned()
            .ok_or_else(|| Error::new(ErrorCode::CodeUnknown))?;
        let refund_to = match &code.origin {
            CodeOrigin::Withdrawal => code.holder.clone(),
            CodeOrigin::Parcel { sender } => sender.clone(),
        };
        let mut meta = Meta::new();
        meta.insert(keys::REASON.into(), "code_expired".into());
        CodeEvent::Refunded {
            id: code.id.clone(),
            amount: code.remaining,
        }
        .write(&mut meta);
        let txn_id = self.new_id("tx");
        let c = self.config.currency;
        let entry = NewEntry {
            entry_type: crate::ledger::EntryType::Reversal,
            txn_id,
            postings: alloc::vec![
                crate::ledger::Posting::new(AccountId::suspense(), -code.remaining, c),
                crate::ledger::Posting::new(AccountId::wallet(&refund_to), code.remaining, c),
            ],
            meta,
        };
        self.post(entry, None)?;
        let amount = self.money(code.remaining).render();
        match &code.origin {
            CodeOrigin::Withdrawal => self.notify(
                &code.holder,
                &format!("Your access code has expired. {amount} has been returned to your eWallet."),
            ),
            CodeOrigin::Parcel { sender } => {
                self.notify(&code.holder, &format!("Your access code for {amount} has expired."));
                let sender = sender.clone();
                self.notify(
                    &sender,
                    &format!(
                        "{amount} sent to {} was not collected and has been returned to your eWallet.",
                        code.holder
                    ),
                );
            }
        }
        Ok(())
    }

    // ---- shared plumbing ----

    pub(crate) fn new_id(&mut self, prefix: &str) -> String {
        format!("{prefix}_{}", random_hex(&mut *self.rng, 10))
    }

    pub(crate) fn rng(&mut self) -> &mut dyn RngCore {
        &mut *self.rng
    }

    pub(crate) fn valid_msisdn(&self, raw: &str) -> Result<String> {
        let check = self.providers.telco.validate_msisdn(raw);
        match msisdn::normalize(raw) {
            Some(m) if check.valid => Ok(m),
            _ => Err(Error::with_message(
                ErrorCode::UnknownMsisdn,
                format!("{} is not a known cellphone number", raw.trim()),
            )),
        }
    }

    pub(crate) fn record(&mut self, event: RegistryEvent) -> Result<()> {
        self.registry.check(&event)?;
        let id = self.new_id("evt");
        self.ledger.append_marker(id, event.to_meta(), self.now())?;
        self.registry.apply(&event)
    }

    pub(crate) fn ensure_open(&mut self, id: &AccountId) -> Result<()> {
        if !self.ledger.is_open(id) {
            let txn = self.new_id("acct");
            self.ledger.open_account(id, txn, self.now())?;
        }
        Ok(())
    }

    /// Best-effort feedback message; an unknown number is counted, not fatal.
    pub(crate) fn notify(&mut self, to: &str, body: &str) {
        let now = self.now();
        if self.providers.send_sms(to, body, now).is_err() {
            self.undeliverable += 1;
        }
    }

    pub(crate) fn replayed(&self, key: &str, fp: &str) -> Result<Option<Outcome>> {
        match self.completed.get(key) {
            Some((stored, outcome)) if stored == fp => Ok(Some(outcome.clone())),
            Some(_) => Err(Error::new(ErrorCode::IdempotencyConflict)),
            None => Ok(None),
        }
    }

    /// Appends a money entry and applies its side tables.
    pub(crate) fn post(&mut self, new: NewEntry, key: Option<&str>) -> Result<JournalEntry> {
        let code_event = CodeEvent::read(&new.meta)?;
        if let Some(ev) = &code_event {
            self.codes.check(ev)?;
        }
        let entry = self.ledger.append_entry(new, key, self.now())?;
        if let Some(ev) = code_event {
            self.codes.apply(ev, entry.seq)?;
        }
        if let (Some(_), Some(k), Some(fp)) = (
            entry.meta(keys::OP),
            entry.idempotency_key(),
            entry.meta(keys::REQUEST_FP),
        ) {
            let outcome = self.outcome_from_entry(&entry)?;
            self.completed.insert(k.to_string(), (fp.to_string(), outcome));
        }
        Ok(entry)
    }

    /// Runs bank legs, then appends. A failed leg or append reverses the
    /// legs that already went through.
    pub(crate) fn post_with_eft(
        &mut self,
        legs: &[(EftDirection, String, i64)],
        new: NewEntry,
        key: Option<&str>,
    ) -> Result<JournalEntry> {
        for (_, account, _) in legs {
            self.ensure_open(&AccountId::bank_mirror(account))?;
        }
        let reference = new.txn_id.clone();
        for (i, (dir, account, amount)) in legs.iter().enumerate() {
            if let Err(e) = self.providers.bank.eft(*dir, account, *amount, &reference) {
                self.compensate(&legs[..i], &reference);
                return Err(e);
            }
        }
        match self.post(new, key) {
            Ok(e) => Ok(e),
            Err(e) => {
                self.compensate(legs, &reference);
                Err(e)
            }
        }
    }

    fn compensate(&mut self, legs: &[(EftDirection, String, i64)], reference: &str) {
        let reference = format!("{reference}-reversal");
        for (dir, account, amount) in legs.iter().rev() {
            let back = match dir {
                EftDirection::Debit => EftDirection::Credit,
                EftDirection::Credit => EftDirection::Debit,
            };
            // injected faults may refuse the first few attempts
            for _ in 0..8 {
                if self.providers.bank.eft(back, account, *amount, &reference).is_ok() {
                    break;
                }
            }
        }
    }

    pub(crate) fn fail(&mut self, mut txn: Transaction, err: Error) -> Error {
        if matches!(txn.state, TxnState::Initiated | TxnState::Validated) {
            let _ = txn.advance(TxnState::Failed);
            txn.failure_reason = Some(err.code);
            if self.failures.len() == MAX_FAILURE_LOG {
                self.failures.remove(0);
            }
            self.failures.push(txn);
        }
        err
    }

    pub(crate) fn bump_incoming(&mut self, msisdn: &str, amount: i64) {
        *self.incoming.entry(msisdn.to_string()).or_default() += amount;
    }

    pub(crate) fn rename_incoming(&mut self, from: &str, to: &str) {
        if let Some(v) = self.incoming.remove(from) {
            *self.incoming.entry(to.to_string()).or_default() += v;
        }
    }

    pub(crate) fn money_meta(&self, op: Op, txn: &Transaction, fp: &str) -> Meta {
        let mut m = Meta::new();
        m.insert(keys::OP.into(), op.as_str().into());
        m.insert(keys::KIND.into(), txn.kind.as_str().into());
        m.insert(keys::SENDER.into(), txn.sender.clone());
        m.insert(keys::RECIPIENT.into(), txn.recipient.clone());
        m.insert(keys::AMOUNT.into(), txn.amount.amount_minor.to_string());
        m.insert(keys::FEE.into(), txn.fee.amount_minor.to_string());
        m.insert(keys::REQUEST_FP.into(), fp.into());
        m
    }

    /// The response a money call gives, derived only from its journal
    /// entry so live answers and post-restart replays are identical.
    pub(crate) fn outcome_from_entry(&self, entry: &JournalEntry) -> Result<Outcome> {
        let bad = |k: &str| Error::with_message(ErrorCode::CorruptJournal, format!("entry {} lacks {k:?}", entry.seq));
        let get = |k: &'static str| entry.meta(k).ok_or_else(|| bad(k));
        let int = |k: &'static str| -> Result<i64> { get(k)?.parse().map_err(|_| bad(k)) };
        let op = get(keys::OP)?;
        let key = entry.idempotency_key().unwrap_or_default().to_string();
        if op == Op::AtmRedeem.as_str() {
            return Ok(Outcome::Redemption(RedemptionReceipt {
                txn_id: entry.txn_id.clone(),
                code_id: get(codes::keys::ID)?.to_string(),
                holder: get(keys::SENDER)?.to_string(),
                amount: self.money(int(keys::AMOUNT)?),
                remaining: self.money(int(keys::CODE_REMAINING_AFTER)?),
                state: CodeState::parse(get(keys::CODE_STATE_AFTER)?).ok_or_else(|| bad(keys::CODE_STATE_AFTER))?,
                idempotency_key: key,
            }));
        }
        let kind = TxnKind::parse(get(keys::KIND)?).ok_or_else(|| bad(keys::KIND))?;
        let txn = Transaction {
            txn_id: entry.txn_id.clone(),
            kind,
            sender: get(keys::SENDER)?.to_string(),
            recipient: get(keys::RECIPIENT)?.to_string(),
            amount: self.money(int(keys::AMOUNT)?),
            fee: self.money(int(keys::FEE)?),
            state: TxnState::Notified,
            failure_reason: None,
            idempotency_key: key,
            trail: Vec::new(),
        };
        if op == Op::Withdrawal.as_str() {
            let expires_at = chrono::DateTime::parse_from_rfc3339(get(codes::keys::EXPIRES_AT)?)
                .map_err(|_| bad(codes::keys::EXPIRES_AT))?
                .to_utc();
            return Ok(Outcome::Withdrawal(WithdrawalReceipt {
                code_id: get(codes::keys::ID)?.to_string(),
                issued_amount: txn.amount,
                expires_at,
                transaction: txn,
            }));
        }
        Ok(Outcome::Transaction(txn))
    }

    /// Issues a fresh code unique among live codes; returns (plaintext, digest).
    pub(crate) fn fresh_code(&mut self) -> (String, String) {
        loop {
            let code = crate::digest::random_digits(&mut *self.rng, CODE_LEN);
            let digest = code_digest(&code);
            if !self.codes.digest_in_use(&digest) {
                return (code, digest);
            }
        }
    }
}
