//! Registration, authentication and account lifecycle.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::codes::{CodeEvent, CodeOrigin};
use super::{keys, Engine};
use crate::digest::{random_alphanumeric, random_digits, SecretDigest};
use crate::error::{Error, ErrorCode, FieldReason, Result};
use crate::identity::{
    is_valid_password, is_valid_pin, normalize_answer, Channel, DetailChanges, RecordedChanges, RegistryEvent, Status,
    Subscriber,
};
use crate::ledger::{AccountId, EntryType, Meta, NewEntry, Posting};
use crate::msisdn;
use crate::providers::{Bank, EftDirection, Sms, Telco};

pub const TEMP_PASSWORD_LEN: usize = 10;
pub const RESET_PIN_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Application {
    pub msisdn: String,
    pub full_name: String,
    pub pin: String,
    pub secret_question: String,
    pub secret_answer: String,
    #[serde(default)]
    pub bank_account: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationReceipt {
    pub msisdn: String,
    pub login_id: String,
    pub temporary_password: String,
    /// Transfers that were waiting for this number and are now in the wallet.
    pub claimed_minor: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginGrant {
    pub msisdn: String,
    pub channel: Channel,
    pub must_change_password: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinRetrieval {
    pub sent_to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetailsOutcome {
    pub msisdn: String,
    pub changed: Vec<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeregistrationOutcome {
    pub status: Status,
    pub swept_minor: i64,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UnlockOutcome {
    Unlocked,
    AlreadyActive,
}

impl<T: Telco, B: Bank, S: Sms> Engine<T, B, S> {
    pub fn register(&mut self, app: &Application) -> Result<RegistrationReceipt> {
        let m = self.valid_msisdn(&app.msisdn)?;
        if self.registry.is_registered(&m) {
            return Err(Error::new(ErrorCode::DuplicateRegistration));
        }
        let mut reasons = Vec::new();
        if app.full_name.trim().is_empty() {
            reasons.push(FieldReason::new("full_name", "is required"));
        }
        if !is_valid_pin(&app.pin) {
            reasons.push(FieldReason::new("pin", "must be 4 to 6 digits"));
        }
        if app.secret_question.trim().is_empty() {
            reasons.push(FieldReason::new("secret_question", "is required"));
        }
        if normalize_answer(&app.secret_answer).is_empty() {
            reasons.push(FieldReason::new("secret_answer", "is required"));
        }
        if !reasons.is_empty() {
            return Err(Error::validation(reasons));
        }
        let bank_account = match app.bank_account.as_deref().map(str::trim).filter(|b| !b.is_empty()) {
            Some(number) => {
                if !self.providers.bank.validate_account(number)?.valid {
                    return Err(Error::with_message(
                        ErrorCode::UnknownBankAccount,
                        format!("bank account {number} was not found"),
                    ));
                }
                Some(number.to_string())
            }
            None => None,
        };

        let password = random_alphanumeric(self.rng(), TEMP_PASSWORD_LEN);
        let subscriber = Subscriber {
            msisdn: m.clone(),
            full_name: app.full_name.trim().to_string(),
            pin_digest: SecretDigest::create(&app.pin, self.rng()),
            login_id: m.clone(),
            password_digest: SecretDigest::create(&password, self.rng()),
            password_temporary: true,
            secret_question: app.secret_question.trim().to_string(),
            secret_answer_digest: SecretDigest::create(&normalize_answer(&app.secret_answer), self.rng()),
            bank_account: bank_account.clone(),
            status: Status::Active,
            failed_attempts: 0,
        };
        self.ensure_open(&AccountId::wallet(&m))?;
        if let Some(b) = &bank_account {
            self.ensure_open(&AccountId::bank_mirror(b))?;
        }
        self.record(RegistryEvent::Registered(subscriber))?;
        let service = self.config.service_code.clone();
        self.notify(
            &m,
            &format!(
                "Welcome to eWallet, {}. Your Login ID is {m} and your temporary password is {password}. Dial {service} to use your eWallet.",
                app.full_name.trim()
            ),
        );
        let claimed_minor = self.claim_parcels(&m)?;
        Ok(RegistrationReceipt {
            msisdn: m.clone(),
            login_id: m,
            temporary_password: password,
            claimed_minor,
        })
    }

    /// Moves transfers parked for a newly registered number into its wallet.
    fn claim_parcels(&mut self, msisdn: &str) -> Result<i64> {
        let parcels: Vec<(String, i64, String)> = self
            .codes
            .parcels_for(msisdn)
            .map(|c| {
                let sender = match &c.origin {
                    CodeOrigin::Parcel { sender } => sender.clone(),
                    CodeOrigin::Withdrawal => String::new(),
                };
                (c.id.clone(), c.remaining, sender)
            })
            .collect();
        let mut total = 0;
        for (id, amount, sender) in parcels {
            let mut meta = Meta::new();
            meta.insert(keys::REASON.into(), "parcel_claimed".into());
            CodeEvent::Redeemed { id, amount }.write(&mut meta);
            let txn_id = self.new_id("tx");
            let c = self.config.currency;
            self.post(
                NewEntry {
                    entry_type: EntryType::Reversal,
                    txn_id,
                    postings: vec![
                        Posting::new(AccountId::suspense(), -amount, c),
                        Posting::new(AccountId::wallet(msisdn), amount, c),
                    ],
                    meta,
                },
                None,
            )?;
            total += amount;
            let text = format!(
                "{} from {sender} has been saved into your eWallet.",
                self.money(amount).render()
            );
            self.notify(msisdn, &text);
        }
        Ok(total)
    }

    /// USSD logs in with msisdn + PIN, WEB with login id + password.
    pub fn login(&mut self, channel: Channel, principal: &str, secret: &str) -> Result<LoginGrant> {
        let found = match channel {
            Channel::Ussd => msisdn::normalize(principal).and_then(|m| {
                if self.registry.was_closed(&m) && !self.registry.is_registered(&m) {
                    Some(Err(Error::new(ErrorCode::AccountClosed)))
                } else {
                    self.registry.get(&m).ok().map(|s| Ok(s.clone()))
                }
            }),
            Channel::Web => match self.registry.find_login(principal.trim()) {
                Some(s) => Some(Ok(s.clone())),
                None => msisdn::normalize(principal).and_then(|m| match self.registry.get(&m) {
                    Ok(s) => Some(Ok(s.clone())),
                    Err(e) if e.code == ErrorCode::AccountClosed => Some(Err(e)),
                    Err(_) => None,
                }),
            },
        };
        let s = match found {
            Some(r) => r?,
            None => return Err(Error::new(ErrorCode::InvalidLogin)),
        };
        if s.status == Status::Locked {
            return Err(Error::new(ErrorCode::AccountLocked));
        }
        let ok = match channel {
            Channel::Ussd => s.pin_digest.matches(secret),
            Channel::Web => s.password_digest.matches(secret),
        };
        if !ok {
            self.record(RegistryEvent::LoginFailed {
                msisdn: s.msisdn.clone(),
                channel,
            })?;
            let locked = self
                .registry
                .get(&s.msisdn)
                .map(|s| s.status == Status::Locked)
                .unwrap_or(false);
            return Err(Error::new(if locked {
                ErrorCode::AccountLocked
            } else {
                ErrorCode::InvalidLogin
            }));
        }
        self.record(RegistryEvent::LoginSucceeded {
            msisdn: s.msisdn.clone(),
            channel,
        })?;
        Ok(LoginGrant {
            msisdn: s.msisdn.clone(),
            channel,
            must_change_password: channel == Channel::Web && s.password_temporary,
        })
    }

    pub fn change_password(&mut self, msisdn: &str, current: &str, new: &str) -> Result<()> {
        let s = self.registry.get_active(msisdn)?.clone();
        if !s.password_digest.matches(current) {
            self.record(RegistryEvent::LoginFailed {
                msisdn: s.msisdn.clone(),
                channel: Channel::Web,
            })?;
            return Err(Error::new(ErrorCode::InvalidLogin));
        }
        if !is_valid_password(new) {
            return Err(Error::validation(vec![FieldReason::new(
                "new_password",
                "must be at least 8 characters",
            )]));
        }
        if s.password_digest.matches(new) {
            return Err(Error::validation(vec![FieldReason::new(
                "new_password",
                "must differ from the current password",
            )]));
        }
        let digest = SecretDigest::create(new, self.rng());
        self.record(RegistryEvent::PasswordChanged {
            msisdn: s.msisdn,
            password_digest: digest,
        })
    }

    pub fn secret_question(&self, msisdn: &str) -> Result<String> {
        let m = msisdn::normalize(msisdn).ok_or_else(|| Error::new(ErrorCode::UnknownMsisdn))?;
        Ok(self.registry.get(&m)?.secret_question.clone())
    }

    /// Issues a fresh PIN by SMS when the secret answer matches.
    pub fn retrieve_pin(&mut self, msisdn: &str, answer: &str) -> Result<PinRetrieval> {
        let m = msisdn::normalize(msisdn).ok_or_else(|| Error::new(ErrorCode::UnknownMsisdn))?;
        let s = self.registry.get(&m)?.clone();
        if !s.secret_answer_digest.matches(&normalize_answer(answer)) {
            return Err(Error::new(ErrorCode::InvalidAnswer));
        }
        let pin = random_digits(self.rng(), RESET_PIN_LEN);
        let digest = SecretDigest::create(&pin, self.rng());
        self.record(RegistryEvent::PinReset {
            msisdn: m.clone(),
            pin_digest: digest,
        })?;
        self.notify(&m, &format!("Your new eWallet PIN is {pin}."));
        Ok(PinRetrieval { sent_to: m })
    }

    pub fn update_details(
        &mut self,
        channel: Channel,
        msisdn: &str,
        changes: &DetailChanges,
    ) -> Result<DetailsOutcome> {
        let m = msisdn::normalize(msisdn).ok_or_else(|| Error::new(ErrorCode::UnknownMsisdn))?;
        let s = self.registry.get_active(&m)?.clone();
        match self.update_details_inner(channel, &s, changes) {
            Ok(out) => {
                if channel == Channel::Ussd {
                    let to = out.msisdn.clone();
                    self.notify(&to, &out.message);
                }
                Ok(out)
            }
            Err(e) => {
                if channel == Channel::Ussd {
                    let mut text = String::from("Your details were not updated");
                    if e.reasons.is_empty() {
                        text.push_str(": ");
                        text.push_str(&e.message);
                    }
                    for r in &e.reasons {
                        text.push_str(&format!("; {} {}", r.field, r.reason));
                    }
                    text.push('.');
                    self.notify(&m, &text);
                }
                Err(e)
            }
        }
    }

    fn update_details_inner(
        &mut self,
        channel: Channel,
        s: &Subscriber,
        changes: &DetailChanges,
    ) -> Result<DetailsOutcome> {
        if changes.is_empty() {
            return Err(Error::validation(vec![FieldReason::new(
                "changes",
                "nothing to update",
            )]));
        }
        if channel == Channel::Ussd {
            let forbidden: Vec<FieldReason> = changes
                .field_names()
                .into_iter()
                .filter(|f| !matches!(*f, "msisdn" | "pin"))
                .map(|f| FieldReason::new(f, "cannot be changed over USSD"))
                .collect();
            if !forbidden.is_empty() {
                let mut e = Error::new(ErrorCode::ForbiddenFieldForChannel);
                e.reasons = forbidden;
                return Err(e);
            }
        }

        let mut reasons = Vec::new();
        let mut recorded = RecordedChanges::default();
        if let Some(raw) = &changes.msisdn {
            match self.valid_msisdn(raw) {
                Err(_) => reasons.push(FieldReason::new("msisdn", "is not a known cellphone number")),
                Ok(new) if new == s.msisdn => reasons.push(FieldReason::new("msisdn", "is already your number")),
                Ok(new) if self.registry.is_registered(&new) => {
                    reasons.push(FieldReason::new("msisdn", "is already registered"))
                }
                Ok(new) => {
                    if self.codes.live().any(|c| c.holder == s.msisdn) || self.parked_by(&s.msisdn) {
                        reasons.push(FieldReason::new("msisdn", "has access codes outstanding"));
                    }
                    recorded.new_msisdn = Some(new);
                }
            }
        }
        if let Some(pin) = &changes.pin {
            if is_valid_pin(pin) {
                recorded.pin_digest = Some(SecretDigest::create(pin, self.rng()));
            } else {
                reasons.push(FieldReason::new("pin", "must be 4 to 6 digits"));
            }
        }
        if let Some(name) = &changes.full_name {
            if name.trim().is_empty() {
                reasons.push(FieldReason::new("full_name", "is required"));
            } else {
                recorded.full_name = Some(name.trim().to_string());
            }
        }
        if let Some(q) = &changes.secret_question {
            if q.trim().is_empty() {
                reasons.push(FieldReason::new("secret_question", "is required"));
            } else {
                recorded.secret_question = Some(q.trim().to_string());
            }
        }
        if let Some(a) = &changes.secret_answer {
            let a = normalize_answer(a);
            if a.is_empty() {
                reasons.push(FieldReason::new("secret_answer", "is required"));
            } else {
                recorded.secret_answer_digest = Some(SecretDigest::create(&a, self.rng()));
            }
        }
        if let Some(b) = &changes.bank_account {
            let b = b.trim();
            if b.is_empty() || !self.providers.bank.validate_account(b)?.valid {
                reasons.push(FieldReason::new("bank_account", "was not found"));
            } else {
                recorded.bank_account = Some(b.to_string());
            }
        }
        if !reasons.is_empty() {
            return Err(Error::validation(reasons));
        }

        if let Some(b) = &recorded.bank_account {
            self.ensure_open(&AccountId::bank_mirror(b))?;
        }
        if let Some(new) = &recorded.new_msisdn {
            self.ensure_open(&AccountId::wallet(new))?;
            let balance = self.wallet_balance(&s.msisdn);
            if balance > 0 {
                let mut meta = Meta::new();
                meta.insert(keys::REASON.into(), "msisdn_change".into());
                meta.insert(keys::SENDER.into(), s.msisdn.clone());
                meta.insert(keys::RECIPIENT.into(), new.clone());
                let txn_id = self.new_id("tx");
                let c = self.config.currency;
                self.post(
                    NewEntry {
                        entry_type: EntryType::P2p,
                        txn_id,
                        postings: vec![
                            Posting::new(AccountId::wallet(&s.msisdn), -balance, c),
                            Posting::new(AccountId::wallet(new), balance, c),
                        ],
                        meta,
                    },
                    None,
                )?;
            }
            self.rename_incoming(&s.msisdn, new);
        }
        let now_msisdn = recorded.new_msisdn.clone().unwrap_or_else(|| s.msisdn.clone());
        self.record(RegistryEvent::DetailsUpdated {
            msisdn: s.msisdn.clone(),
            changes: recorded,
        })?;
        let changed: Vec<String> = changes.field_names().into_iter().map(String::from).collect();
        let message = format!("Your details were updated successfully: {}.", changed.join(", "));
        Ok(DetailsOutcome {
            msisdn: now_msisdn,
            changed,
            message,
        })
    }

    fn parked_by(&self, sender: &str) -> bool {
        self.codes
            .live()
            .any(|c| matches!(&c.origin, CodeOrigin::Parcel { sender: s } if s == sender))
    }

    /// Without confirmation only a confirmation request goes out. With it,
    /// live withdrawal codes are cancelled, the wallet is swept to the linked
    /// bank account and the subscriber is closed.
    pub fn deregister(&mut self, msisdn: &str, confirmed: bool) -> Result<DeregistrationOutcome> {
        let m = msisdn::normalize(msisdn).ok_or_else(|| Error::new(ErrorCode::UnknownMsisdn))?;
        let s = self.registry.get_active(&m)?.clone();
        if !confirmed {
            self.record(RegistryEvent::DeregistrationRequested { msisdn: m.clone() })?;
            self.notify(
                &m,
                "You asked to close your eWallet account. Confirm the request to proceed.",
            );
            return Ok(DeregistrationOutcome {
                status: s.status,
                swept_minor: 0,
                message: "Please confirm de-registration".into(),
            });
        }
        if self.parked_by(&m) {
            return Err(Error::validation(vec![FieldReason::new(
                "msisdn",
                "has transfers waiting to be collected",
            )]));
        }
        let held: Vec<(String, i64)> = self
            .codes
            .live()
            .filter(|c| c.holder == m && c.origin == CodeOrigin::Withdrawal)
            .map(|c| (c.id.clone(), c.remaining))
            .collect();
        let residue = self.wallet_balance(&m) + held.iter().map(|(_, a)| a).sum::<i64>();
        if residue > 0 && s.bank_account.is_none() {
            return Err(Error::new(ErrorCode::ResidualBalanceNoBank));
        }
        for (id, amount) in held {
            let mut meta = Meta::new();
            meta.insert(keys::REASON.into(), "deregistration".into());
            CodeEvent::Cancelled { id, amount }.write(&mut meta);
            let txn_id = self.new_id("tx");
            let c = self.config.currency;
            self.post(
                NewEntry {
                    entry_type: EntryType::Reversal,
                    txn_id,
                    postings: vec![
                        Posting::new(AccountId::suspense(), -amount, c),
                        Posting::new(AccountId::wallet(&m), amount, c),
                    ],
                    meta,
                },
                None,
            )?;
        }
        let balance = self.wallet_balance(&m);
        if balance > 0 {
            let bank = s.bank_account.clone().expect("checked above");
            let mut meta = Meta::new();
            meta.insert(keys::REASON.into(), "deregistration_sweep".into());
            meta.insert(keys::SENDER.into(), m.clone());
            meta.insert(keys::RECIPIENT.into(), bank.clone());
            let txn_id = self.new_id("tx");
            let c = self.config.currency;
            self.post_with_eft(
                &[(EftDirection::Credit, bank.clone(), balance)],
                NewEntry {
                    entry_type: EntryType::WalletToBank,
                    txn_id,
                    postings: vec![
                        Posting::new(AccountId::wallet(&m), -balance, c),
                        Posting::new(AccountId::bank_mirror(&bank), balance, c),
                    ],
                    meta,
                },
                None,
            )?;
        }
        self.record(RegistryEvent::Deregistered { msisdn: m.clone() })?;
        self.clear_incoming(&m);
        let message = match &s.bank_account {
            Some(b) if balance > 0 => format!(
                "Your eWallet account has been closed. {} was transferred to bank account {b}.",
                self.money(balance).render()
            ),
            _ => "Your eWallet account has been closed.".to_string(),
        };
        self.notify(&m, &message);
        Ok(DeregistrationOutcome {
            status: Status::Closed,
            swept_minor: balance,
            message,
        })
    }

    /// Administrative unlock; unlocking an active subscriber changes nothing.
    pub fn unlock(&mut self, msisdn: &str) -> Result<UnlockOutcome> {
        let m = msisdn::normalize(msisdn).ok_or_else(|| Error::new(ErrorCode::UnknownMsisdn))?;
        let s = self.registry.get(&m)?;
        if s.status != Status::Locked {
            return Ok(UnlockOutcome::AlreadyActive);
        }
        self.record(RegistryEvent::Unlocked { msisdn: m })?;
        Ok(UnlockOutcome::Unlocked)
    }
}
