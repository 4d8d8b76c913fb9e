//! The providers' layer: telco number registry, bank, and SMS gateway.
//!
//! Each provider is a trait so a real integration can slot in; the
//! `Simulated*` types are deterministic in-process stand-ins with a
//! fault-injection switch.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorCode, Result};
use crate::ledger::{Meta, EVENT};
use crate::msisdn;
use crate::time::Timestamp;

pub const DEFAULT_CARRIERS: [&str; 7] = ["Vodacom", "MTN", "Cell C", "Telkom", "Airtel", "Tigo", "CCT"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsisdnCheck {
    pub valid: bool,
    pub carrier: Option<String>,
}

pub trait Telco: Send {
    fn validate_msisdn(&self, msisdn: &str) -> MsisdnCheck;
    fn provision(&mut self, msisdn: &str, carrier: &str) -> Result<()>;
    fn health(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedTelco {
    carriers: BTreeSet<String>,
    active: BTreeMap<String, String>,
}

impl Default for SimulatedTelco {
    fn default() -> Self {
        Self {
            carriers: DEFAULT_CARRIERS.iter().map(|c| c.to_string()).collect(),
            active: BTreeMap::new(),
        }
    }
}

impl SimulatedTelco {
    pub fn carriers(&self) -> impl Iterator<Item = &str> {
        self.carriers.iter().map(String::as_str)
    }

    pub fn numbers(&self) -> impl Iterator<Item = (&str, &str)> {
        self.active.iter().map(|(m, c)| (m.as_str(), c.as_str()))
    }
}

impl Telco for SimulatedTelco {
    fn validate_msisdn(&self, raw: &str) -> MsisdnCheck {
        let carrier = msisdn::normalize(raw).and_then(|m| self.active.get(&m).cloned());
        MsisdnCheck {
            valid: carrier.is_some(),
            carrier,
        }
    }

    fn provision(&mut self, raw: &str, carrier: &str) -> Result<()> {
        let m = msisdn::normalize(raw)
            .ok_or_else(|| Error::with_message(ErrorCode::InvalidRequest, format!("malformed msisdn {raw:?}")))?;
        if carrier.trim().is_empty() {
            return Err(Error::with_message(ErrorCode::InvalidRequest, "carrier is required"));
        }
        self.carriers.insert(carrier.to_string());
        self.active.insert(m, carrier.to_string());
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EftDirection {
    Debit,
    Credit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EftRecord {
    pub direction: EftDirection,
    pub account: String,
    pub amount_minor: i64,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EftReceipt {
    pub reference: String,
    pub account: String,
    pub direction: EftDirection,
    pub amount_minor: i64,
    pub balance_after_minor: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankAccountCheck {
    pub valid: bool,
    pub holder: Option<String>,
}

/// Fault injection: the next `fail_next` calls return `PROVIDER_UNAVAILABLE`.
/// `latency_ms` is advisory; std front-ends may sleep on it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultPlan {
    #[serde(default)]
    pub fail_next: u32,
    #[serde(default)]
    pub latency_ms: u64,
}

pub trait Bank: Send {
    fn validate_account(&mut self, number: &str) -> Result<BankAccountCheck>;
    /// Funds available in an account, for source selection.
    fn available(&mut self, number: &str) -> Result<i64>;
    fn eft(&mut self, direction: EftDirection, number: &str, amount_minor: i64, reference: &str) -> Result<EftReceipt>;
    fn provision(&mut self, number: &str, holder: &str, balance_minor: i64) -> Result<()>;
    fn arm_faults(&mut self, plan: FaultPlan);
    fn faults(&self) -> FaultPlan;
    fn health(&self) -> bool {
        true
    }
    /// Re-applies an EFT the journal proves happened, during startup replay.
    /// Integrations with a real bank have nothing to do here.
    fn replay_eft(
        &mut self,
        _direction: EftDirection,
        _number: &str,
        _amount_minor: i64,
        _reference: &str,
    ) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankAccount {
    pub holder: String,
    pub balance_minor: i64,
}

#[derive(Debug, Clone, Default)]
pub struct SimulatedBank {
    accounts: BTreeMap<String, BankAccount>,
    eft_log: Vec<EftRecord>,
    faults: FaultPlan,
}

impl SimulatedBank {
    pub fn account(&self, number: &str) -> Option<&BankAccount> {
        self.accounts.get(number)
    }

    pub fn accounts(&self) -> impl Iterator<Item = (&str, &BankAccount)> {
        self.accounts.iter().map(|(n, a)| (n.as_str(), a))
    }

    pub fn eft_log(&self) -> &[EftRecord] {
        &self.eft_log
    }

    /// Σ credits − Σ debits this service has sent to `number`.
    pub fn net_eft(&self, number: &str) -> i64 {
        self.eft_log
            .iter()
            .filter(|r| r.account == number)
            .map(|r| match r.direction {
                EftDirection::Credit => r.amount_minor,
                EftDirection::Debit => -r.amount_minor,
            })
            .sum()
    }

    fn trip(&mut self) -> Result<()> {
        if self.faults.fail_next > 0 {
            self.faults.fail_next -= 1;
            return Err(Error::new(ErrorCode::ProviderUnavailable));
        }
        Ok(())
    }

    fn apply_eft(
        &mut self,
        direction: EftDirection,
        number: &str,
        amount_minor: i64,
        reference: &str,
    ) -> Result<EftReceipt> {
        if amount_minor <= 0 {
            return Err(Error::new(ErrorCode::AmountInvalid));
        }
        let acct = self
            .accounts
            .get_mut(number)
            .ok_or_else(|| Error::new(ErrorCode::UnknownBankAccount))?;
        match direction {
            EftDirection::Debit => {
                if acct.balance_minor < amount_minor {
                    return Err(Error::new(ErrorCode::NotSufficientFunds));
                }
                acct.balance_minor -= amount_minor;
            }
            EftDirection::Credit => acct.balance_minor += amount_minor,
        }
        let balance_after_minor = acct.balance_minor;
        self.eft_log.push(EftRecord {
            direction,
            account: number.to_string(),
            amount_minor,
            reference: reference.to_string(),
        });
        Ok(EftReceipt {
            reference: reference.to_string(),
            account: number.to_string(),
            direction,
            amount_minor,
            balance_after_minor,
        })
    }
}

impl Bank for SimulatedBank {
    fn validate_account(&mut self, number: &str) -> Result<BankAccountCheck> {
        self.trip()?;
        let holder = self.accounts.get(number).map(|a| a.holder.clone());
        Ok(BankAccountCheck {
            valid: holder.is_some(),
            holder,
        })
    }

    fn available(&mut self, number: &str) -> Result<i64> {
        self.trip()?;
        self.accounts
            .get(number)
            .map(|a| a.balance_minor)
            .ok_or_else(|| Error::new(ErrorCode::UnknownBankAccount))
    }

    fn eft(&mut self, direction: EftDirection, number: &str, amount_minor: i64, reference: &str) -> Result<EftReceipt> {
        self.trip()?;
        self.apply_eft(direction, number, amount_minor, reference)
    }

    fn provision(&mut self, number: &str, holder: &str, balance_minor: i64) -> Result<()> {
        if number.trim().is_empty() || balance_minor < 0 {
            return Err(Error::with_message(
                ErrorCode::InvalidRequest,
                "bank account needs a number and a non-negative balance",
            ));
        }
        self.accounts.insert(
            number.to_string(),
            BankAccount {
                holder: holder.to_string(),
                balance_minor,
            },
        );
        Ok(())
    }

    fn arm_faults(&mut self, plan: FaultPlan) {
        self.faults = plan;
    }

    fn faults(&self) -> FaultPlan {
        self.faults
    }

    fn health(&self) -> bool {
        self.faults.fail_next == 0
    }

    fn replay_eft(&mut self, direction: EftDirection, number: &str, amount_minor: i64, reference: &str) -> Result<()> {
        self.apply_eft(direction, number, amount_minor, reference)
            .map(|_| ())
            .map_err(|e| {
                Error::with_message(
                    ErrorCode::CorruptJournal,
                    format!("replaying EFT {reference} on {number}: {}", e.message),
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeliveryState {
    Queued,
    Delivered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmsMessage {
    pub id: u64,
    pub to: String,
    pub body: String,
    pub queued_at: Timestamp,
    pub delivery_state: DeliveryState,
}

pub trait Sms: Send {
    /// Queues a message for an already validated number.
    fn enqueue(&mut self, to: &str, body: &str, at: Timestamp) -> SmsMessage;
    fn outbox(&self, msisdn: &str) -> Vec<SmsMessage>;
    /// Marks the listed messages DELIVERED; returns how many changed.
    fn ack(&mut self, msisdn: &str, ids: &[u64]) -> usize;
}

/// Per-number FIFO outboxes. Polling never consumes; acknowledging marks
/// messages delivered.
#[derive(Debug, Clone, Default)]
pub struct SmsOutbox {
    next_id: u64,
    boxes: BTreeMap<String, Vec<SmsMessage>>,
}

impl SmsOutbox {
    pub fn total(&self) -> usize {
        self.boxes.values().map(Vec::len).sum()
    }

    pub fn all(&self) -> impl Iterator<Item = &SmsMessage> {
        self.boxes.values().flatten()
    }

    pub fn last_to(&self, msisdn: &str) -> Option<&SmsMessage> {
        self.boxes.get(msisdn).and_then(|b| b.last())
    }
}

impl Sms for SmsOutbox {
    fn enqueue(&mut self, to: &str, body: &str, at: Timestamp) -> SmsMessage {
        self.next_id += 1;
        let msg = SmsMessage {
            id: self.next_id,
            to: to.to_string(),
            body: body.to_string(),
            queued_at: at,
            delivery_state: DeliveryState::Queued,
        };
        self.boxes.entry(to.to_string()).or_default().push(msg.clone());
        msg
    }

    fn outbox(&self, msisdn: &str) -> Vec<SmsMessage> {
        self.boxes.get(msisdn).cloned().unwrap_or_default()
    }

    fn ack(&mut self, msisdn: &str, ids: &[u64]) -> usize {
        let Some(b) = self.boxes.get_mut(msisdn) else {
            return 0;
        };
        let mut changed = 0;
        for m in b.iter_mut().filter(|m| ids.contains(&m.id)) {
            if m.delivery_state == DeliveryState::Queued {
                m.delivery_state = DeliveryState::Delivered;
                changed += 1;
            }
        }
        changed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedMsisdn {
    pub msisdn: String,
    pub carrier: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedBankAccount {
    pub number: String,
    pub holder: String,
    pub balance_minor: i64,
}

/// Seed fixture file: `{msisdns:[{msisdn,carrier}], bank_accounts:[{number,holder,balance_minor}]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedFixture {
    #[serde(default)]
    pub msisdns: Vec<SeedMsisdn>,
    #[serde(default)]
    pub bank_accounts: Vec<SeedBankAccount>,
}

/// Provider state changes that are journaled so a restart can rebuild them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderEvent {
    MsisdnProvisioned(SeedMsisdn),
    BankAccountProvisioned(SeedBankAccount),
}

const MSISDN_PROVISIONED: &str = "telco_msisdn_provisioned";
const BANK_PROVISIONED: &str = "bank_account_provisioned";

impl ProviderEvent {
    pub fn is_provider_event(meta: &Meta) -> bool {
        matches!(
            meta.get(EVENT).map(String::as_str),
            Some(MSISDN_PROVISIONED | BANK_PROVISIONED)
        )
    }

    pub fn to_meta(&self) -> Meta {
        let mut m = Meta::new();
        match self {
            ProviderEvent::MsisdnProvisioned(s) => {
                m.insert(EVENT.into(), MSISDN_PROVISIONED.into());
                m.insert("msisdn".into(), s.msisdn.clone());
                m.insert("carrier".into(), s.carrier.clone());
            }
            ProviderEvent::BankAccountProvisioned(b) => {
                m.insert(EVENT.into(), BANK_PROVISIONED.into());
                m.insert("number".into(), b.number.clone());
                m.insert("holder".into(), b.holder.clone());
                m.insert("balance_minor".into(), b.balance_minor.to_string());
            }
        }
        m
    }

    pub fn from_meta(m: &Meta) -> Result<Self> {
        let get = |k: &str| {
            m.get(k)
                .cloned()
                .ok_or_else(|| Error::with_message(ErrorCode::CorruptJournal, format!("provider record lacks {k:?}")))
        };
        match m.get(EVENT).map(String::as_str) {
            Some(MSISDN_PROVISIONED) => Ok(ProviderEvent::MsisdnProvisioned(SeedMsisdn {
                msisdn: get("msisdn")?,
                carrier: get("carrier")?,
            })),
            Some(BANK_PROVISIONED) => Ok(ProviderEvent::BankAccountProvisioned(SeedBankAccount {
                number: get("number")?,
                holder: get("holder")?,
                balance_minor: get("balance_minor")?
                    .parse()
                    .map_err(|_| Error::with_message(ErrorCode::CorruptJournal, "bad balance_minor"))?,
            })),
            _ => Err(Error::with_message(ErrorCode::CorruptJournal, "not a provider record")),
        }
    }
}

/// The three providers the engine talks to.
#[derive(Debug, Clone, Default)]
pub struct Providers<T = SimulatedTelco, B = SimulatedBank, S = SmsOutbox> {
    pub telco: T,
    pub bank: B,
    pub sms: S,
}

impl<T: Telco, B: Bank, S: Sms> Providers<T, B, S> {
    pub fn new(telco: T, bank: B, sms: S) -> Self {
        Self { telco, bank, sms }
    }

    pub fn apply(&mut self, event: &ProviderEvent) -> Result<()> {
        match event {
            ProviderEvent::MsisdnProvisioned(s) => self.telco.provision(&s.msisdn, &s.carrier),
            ProviderEvent::BankAccountProvisioned(b) => self.bank.provision(&b.number, &b.holder, b.balance_minor),
        }
    }

    /// Validated send: unknown numbers are refused with `UNKNOWN_MSISDN`.
    pub fn send_sms(&mut self, to: &str, body: &str, at: Timestamp) -> Result<SmsMessage> {
        let check = self.telco.validate_msisdn(to);
        if !check.valid {
            return Err(Error::with_message(
                ErrorCode::UnknownMsisdn,
                format!("{to} is not a known cellphone number"),
            ));
        }
        let to = msisdn::normalize(to).expect("validated");
        Ok(self.sms.enqueue(&to, body, at))
    }
}
