//! Subscriber records and their event-sourced registry.
//!
//! The registry is never mutated directly: every change is expressed as a
//! [`RegistryEvent`], written to the journal as a meta-only record and then
//! applied. Replaying those records rebuilds the registry exactly.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::digest::SecretDigest;
use crate::error::{Error, ErrorCode, Result};
use crate::ledger::{Meta, EVENT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Pending,
    Active,
    Locked,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Channel {
    Ussd,
    Web,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Ussd => "USSD",
            Channel::Web => "WEB",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "USSD" => Ok(Channel::Ussd),
            "WEB" => Ok(Channel::Web),
            _ => Err(corrupt(format!("unknown channel {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subscriber {
    pub msisdn: String,
    pub full_name: String,
    pub pin_digest: SecretDigest,
    pub login_id: String,
    pub password_digest: SecretDigest,
    pub password_temporary: bool,
    pub secret_question: String,
    pub secret_answer_digest: SecretDigest,
    pub bank_account: Option<String>,
    pub status: Status,
    pub failed_attempts: u32,
}

/// Secret answers are compared after trimming and case-folding.
pub fn normalize_answer(answer: &str) -> String {
    answer.trim().to_lowercase()
}

pub fn is_valid_pin(pin: &str) -> bool {
    (4..=6).contains(&pin.len()) && pin.bytes().all(|b| b.is_ascii_digit())
}

pub const MIN_PASSWORD_LEN: usize = 8;

pub fn is_valid_password(pw: &str) -> bool {
    pw.chars().count() >= MIN_PASSWORD_LEN
}

/// Field changes requested through `update_details`. Secrets are in clear
/// here and digested before anything is recorded.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetailChanges {
    #[serde(default)]
    pub msisdn: Option<String>,
    #[serde(default)]
    pub pin: Option<String>,
    #[serde(default)]
    pub full_name: Option<String>,
    #[serde(default)]
    pub bank_account: Option<String>,
    #[serde(default)]
    pub secret_question: Option<String>,
    #[serde(default)]
    pub secret_answer: Option<String>,
}

impl DetailChanges {
    pub fn field_names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.msisdn.is_some() {
            out.push("msisdn");
        }
        if self.pin.is_some() {
            out.push("pin");
        }
        if self.full_name.is_some() {
            out.push("full_name");
        }
        if self.bank_account.is_some() {
            out.push("bank_account");
        }
        if self.secret_question.is_some() {
            out.push("secret_question");
        }
        if self.secret_answer.is_some() {
            out.push("secret_answer");
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.field_names().is_empty()
    }
}

/// Already-digested detail changes, as journaled.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordedChanges {
    pub new_msisdn: Option<String>,
    pub pin_digest: Option<SecretDigest>,
    pub full_name: Option<String>,
    pub bank_account: Option<String>,
    pub secret_question: Option<String>,
    pub secret_answer_digest: Option<SecretDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegistryEvent {
    Registered(Subscriber),
    LoginSucceeded {
        msisdn: String,
        channel: Channel,
    },
    LoginFailed {
        msisdn: String,
        channel: Channel,
    },
    PasswordChanged {
        msisdn: String,
        password_digest: SecretDigest,
    },
    PinReset {
        msisdn: String,
        pin_digest: SecretDigest,
    },
    DetailsUpdated {
        msisdn: String,
        changes: RecordedChanges,
    },
    DeregistrationRequested {
        msisdn: String,
    },
    Deregistered {
        msisdn: String,
    },
    Unlocked {
        msisdn: String,
    },
}

mod ev {
    pub const REGISTERED: &str = "subscriber_registered";
    pub const LOGIN_SUCCEEDED: &str = "login_succeeded";
    pub const LOGIN_FAILED: &str = "login_failed";
    pub const PASSWORD_CHANGED: &str = "password_changed";
    pub const PIN_RESET: &str = "pin_reset";
    pub const DETAILS_UPDATED: &str = "details_updated";
    pub const DEREGISTRATION_REQUESTED: &str = "deregistration_requested";
    pub const DEREGISTERED: &str = "deregistered";
    pub const UNLOCKED: &str = "unlocked";
}

fn corrupt(msg: String) -> Error {
    Error::with_message(ErrorCode::CorruptJournal, msg)
}

fn put(meta: &mut Meta, k: &str, v: impl ToString) {
    meta.insert(k.to_string(), v.to_string());
}

fn take<'a>(meta: &'a Meta, k: &str) -> Result<&'a str> {
    meta.get(k)
        .map(String::as_str)
        .ok_or_else(|| corrupt(format!("registry record lacks {k:?}")))
}

impl RegistryEvent {
    pub fn is_registry_event(meta: &Meta) -> bool {
        matches!(
            meta.get(EVENT).map(String::as_str),
            Some(
                ev::REGISTERED
                    | ev::LOGIN_SUCCEEDED
                    | ev::LOGIN_FAILED
                    | ev::PASSWORD_CHANGED
                    | ev::PIN_RESET
                    | ev::DETAILS_UPDATED
                    | ev::DEREGISTRATION_REQUESTED
                    | ev::DEREGISTERED
                    | ev::UNLOCKED
            )
        )
    }

    pub fn msisdn(&self) -> &str {
        match self {
            RegistryEvent::Registered(s) => &s.msisdn,
            RegistryEvent::LoginSucceeded { msisdn, .. }
            | RegistryEvent::LoginFailed { msisdn, .. }
            | RegistryEvent::PasswordChanged { msisdn, .. }
            | RegistryEvent::PinReset { msisdn, .. }
            | RegistryEvent::DetailsUpdated { msisdn, .. }
            | RegistryEvent::DeregistrationRequested { msisdn }
            | RegistryEvent::Deregistered { msisdn }
            | RegistryEvent::Unlocked { msisdn } => msisdn,
        }
    }

    pub fn to_meta(&self) -> Meta {
        let mut m = Meta::new();
        put(&mut m, "msisdn", self.msisdn());
        match self {
            RegistryEvent::Registered(s) => {
                put(&mut m, EVENT, ev::REGISTERED);
                put(&mut m, "full_name", &s.full_name);
                put(&mut m, "login_id", &s.login_id);
                put(&mut m, "pin_digest", &s.pin_digest);
                put(&mut m, "password_digest", &s.password_digest);
                put(&mut m, "password_temporary", s.password_temporary);
                put(&mut m, "secret_question", &s.secret_question);
                put(&mut m, "secret_answer_digest", &s.secret_answer_digest);
                if let Some(b) = &s.bank_account {
                    put(&mut m, "bank_account", b);
                }
            }
            RegistryEvent::LoginSucceeded { channel, .. } => {
                put(&mut m, EVENT, ev::LOGIN_SUCCEEDED);
                put(&mut m, "channel", channel.as_str());
            }
            RegistryEvent::LoginFailed { channel, .. } => {
                put(&mut m, EVENT, ev::LOGIN_FAILED);
                put(&mut m, "channel", channel.as_str());
            }
            RegistryEvent::PasswordChanged { password_digest, .. } => {
                put(&mut m, EVENT, ev::PASSWORD_CHANGED);
                put(&mut m, "password_digest", password_digest);
            }
            RegistryEvent::PinReset { pin_digest, .. } => {
                put(&mut m, EVENT, ev::PIN_RESET);
                put(&mut m, "pin_digest", pin_digest);
            }
            RegistryEvent::DetailsUpdated { changes, .. } => {
                put(&mut m, EVENT, ev::DETAILS_UPDATED);
                if let Some(v) = &changes.new_msisdn {
                    put(&mut m, "new_msisdn", v);
                }
                if let Some(v) = &changes.pin_digest {
                    put(&mut m, "pin_digest", v);
                }
                if let Some(v) = &changes.full_name {
                    put(&mut m, "full_name", v);
                }
                if let Some(v) = &changes.bank_account {
                    put(&mut m, "bank_account", v);
                }
                if let Some(v) = &changes.secret_question {
                    put(&mut m, "secret_question", v);
                }
                if let Some(v) = &changes.secret_answer_digest {
                    put(&mut m, "secret_answer_digest", v);
                }
            }
            RegistryEvent::DeregistrationRequested { .. } => put(&mut m, EVENT, ev::DEREGISTRATION_REQUESTED),
            RegistryEvent::Deregistered { .. } => put(&mut m, EVENT, ev::DEREGISTERED),
            RegistryEvent::Unlocked { .. } => put(&mut m, EVENT, ev::UNLOCKED),
        }
        m
    }

    pub fn from_meta(m: &Meta) -> Result<Self> {
        let msisdn = take(m, "msisdn")?.to_string();
        let opt = |k: &str| m.get(k).cloned();
        let digest = |k: &str| -> Result<Option<SecretDigest>> { m.get(k).map(|v| v.parse()).transpose() };
        Ok(match take(m, EVENT)? {
            ev::REGISTERED => RegistryEvent::Registered(Subscriber {
                msisdn,
                full_name: take(m, "full_name")?.to_string(),
                pin_digest: take(m, "pin_digest")?.parse()?,
                login_id: take(m, "login_id")?.to_string(),
                password_digest: take(m, "password_digest")?.parse()?,
                password_temporary: take(m, "password_temporary")? == "true",
                secret_question: take(m, "secret_question")?.to_string(),
                secret_answer_digest: take(m, "secret_answer_digest")?.parse()?,
                bank_account: opt("bank_account"),
                status: Status::Active,
                failed_attempts: 0,
            }),
            ev::LOGIN_SUCCEEDED => RegistryEvent::LoginSucceeded {
                msisdn,
                channel: Channel::parse(take(m, "channel")?)?,
            },
            ev::LOGIN_FAILED => RegistryEvent::LoginFailed {
                msisdn,
                channel: Channel::parse(take(m, "channel")?)?,
            },
            ev::PASSWORD_CHANGED => RegistryEvent::PasswordChanged {
                msisdn,
                password_digest: take(m, "password_digest")?.parse()?,
            },
            ev::PIN_RESET => RegistryEvent::PinReset {
                msisdn,
                pin_digest: take(m, "pin_digest")?.parse()?,
            },
            ev::DETAILS_UPDATED => RegistryEvent::DetailsUpdated {
                msisdn,
                changes: RecordedChanges {
                    new_msisdn: opt("new_msisdn"),
                    pin_digest: digest("pin_digest")?,
                    full_name: opt("full_name"),
                    bank_account: opt("bank_account"),
                    secret_question: opt("secret_question"),
                    secret_answer_digest: digest("secret_answer_digest")?,
                },
            },
            ev::DEREGISTRATION_REQUESTED => RegistryEvent::DeregistrationRequested { msisdn },
            ev::DEREGISTERED => RegistryEvent::Deregistered { msisdn },
            ev::UNLOCKED => RegistryEvent::Unlocked { msisdn },
            other => return Err(corrupt(format!("unknown registry event {other:?}"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Registry {
    lock_threshold: u32,
    live: BTreeMap<String, Subscriber>,
    closed: BTreeMap<String, Vec<Subscriber>>,
}

impl Registry {
    pub fn new(lock_threshold: u32) -> Self {
        Self {
            lock_threshold: lock_threshold.max(1),
            live: BTreeMap::new(),
            closed: BTreeMap::new(),
        }
    }

    pub fn lock_threshold(&self) -> u32 {
        self.lock_threshold
    }

    /// The non-closed subscriber for `msisdn`.
    pub fn get(&self, msisdn: &str) -> Result<&Subscriber> {
        match self.live.get(msisdn) {
            Some(s) => Ok(s),
            None if self.closed.contains_key(msisdn) => Err(Error::new(ErrorCode::AccountClosed)),
            None => Err(Error::with_message(
                ErrorCode::UnknownMsisdn,
                format!("{msisdn} is not registered"),
            )),
        }
    }

    /// Like [`get`](Self::get) but also refuses locked subscribers.
    pub fn get_active(&self, msisdn: &str) -> Result<&Subscriber> {
        let s = self.get(msisdn)?;
        match s.status {
            Status::Active => Ok(s),
            Status::Locked => Err(Error::new(ErrorCode::AccountLocked)),
            Status::Closed => Err(Error::new(ErrorCode::AccountClosed)),
            Status::Pending => Err(Error::with_message(ErrorCode::InvalidLogin, "registration pending")),
        }
    }

    pub fn is_registered(&self, msisdn: &str) -> bool {
        self.live.contains_key(msisdn)
    }

    pub fn was_closed(&self, msisdn: &str) -> bool {
        self.closed.contains_key(msisdn)
    }

    pub fn find_login(&self, login_id: &str) -> Option<&Subscriber> {
        self.live.values().find(|s| s.login_id == login_id)
    }

    pub fn subscribers(&self) -> impl Iterator<Item = &Subscriber> {
        self.live.values()
    }

    pub fn closed_subscribers(&self) -> impl Iterator<Item = &Subscriber> {
        self.closed.values().flatten()
    }

    /// Checks the event against current state, without applying it.
    pub fn check(&self, event: &RegistryEvent) -> Result<()> {
        match event {
            RegistryEvent::Registered(s) => {
                if self.live.contains_key(&s.msisdn) {
                    return Err(Error::new(ErrorCode::DuplicateRegistration));
                }
            }
            RegistryEvent::DetailsUpdated { msisdn, changes } => {
                self.get(msisdn)?;
                if let Some(new) = &changes.new_msisdn {
                    if new != msisdn && self.live.contains_key(new) {
                        return Err(Error::new(ErrorCode::DuplicateRegistration));
                    }
                }
            }
            other => {
                self.get(other.msisdn())?;
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, event: &RegistryEvent) -> Result<()> {
        self.check(event)?;
        match event {
            RegistryEvent::Registered(s) => {
                self.live.insert(s.msisdn.clone(), s.clone());
            }
            RegistryEvent::LoginSucceeded { msisdn, .. } => {
                self.live_mut(msisdn).failed_attempts = 0;
            }
            RegistryEvent::LoginFailed { msisdn, .. } => {
                let threshold = self.lock_threshold;
                let s = self.live_mut(msisdn);
                s.failed_attempts = (s.failed_attempts + 1).min(threshold);
                if s.failed_attempts >= threshold && s.status == Status::Active {
                    s.status = Status::Locked;
                }
            }
            RegistryEvent::PasswordChanged {
                msisdn,
                password_digest,
            } => {
                let s = self.live_mut(msisdn);
                s.password_digest = password_digest.clone();
                s.password_temporary = false;
            }
            RegistryEvent::PinReset { msisdn, pin_digest } => {
                self.live_mut(msisdn).pin_digest = pin_digest.clone();
            }
            RegistryEvent::DetailsUpdated { msisdn, changes } => {
                let mut s = self.live.remove(msisdn).expect("checked");
                if let Some(new) = &changes.new_msisdn {
                    if s.login_id == s.msisdn {
                        s.login_id = new.clone();
                    }
                    s.msisdn = new.clone();
                }
                if let Some(v) = &changes.pin_digest {
                    s.pin_digest = v.clone();
                }
                if let Some(v) = &changes.full_name {
                    s.full_name = v.clone();
                }
                if let Some(v) = &changes.bank_account {
                    s.bank_account = Some(v.clone());
                }
                if let Some(v) = &changes.secret_question {
                    s.secret_question = v.clone();
                }
                if let Some(v) = &changes.secret_answer_digest {
                    s.secret_answer_digest = v.clone();
                }
                self.live.insert(s.msisdn.clone(), s);
            }
            RegistryEvent::DeregistrationRequested { .. } => {}
            RegistryEvent::Deregistered { msisdn } => {
                let mut s = self.live.remove(msisdn).expect("checked");
                s.status = Status::Closed;
                self.closed.entry(msisdn.clone()).or_default().push(s);
            }
            RegistryEvent::Unlocked { msisdn } => {
                let s = self.live_mut(msisdn);
                if s.status == Status::Locked {
                    s.status = Status::Active;
                }
                s.failed_attempts = 0;
            }
        }
        Ok(())
    }

    fn live_mut(&mut self, msisdn: &str) -> &mut Subscriber {
        self.live.get_mut(msisdn).expect("checked")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn subscriber(msisdn: &str) -> Subscriber {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        Subscriber {
            msisdn: msisdn.into(),
            full_name: "Kayembe Ka Tshitupa".into(),
            pin_digest: SecretDigest::create("1234", &mut rng),
            login_id: msisdn.into(),
            password_digest: SecretDigest::create("TempPass01", &mut rng),
            password_temporary: true,
            secret_question: "Home town?".into(),
            secret_answer_digest: SecretDigest::create("kananga", &mut rng),
            bank_account: Some("1002003004".into()),
            status: Status::Active,
            failed_attempts: 0,
        }
    }

    #[test]
    fn events_round_trip_through_meta() {
        let s = subscriber("27820000001");
        let events = [
            RegistryEvent::Registered(s.clone()),
            RegistryEvent::LoginFailed {
                msisdn: s.msisdn.clone(),
                channel: Channel::Ussd,
            },
            RegistryEvent::DetailsUpdated {
                msisdn: s.msisdn.clone(),
                changes: RecordedChanges {
                    new_msisdn: Some("27820000011".into()),
                    pin_digest: Some(s.pin_digest.clone()),
                    ..Default::default()
                },
            },
            RegistryEvent::Deregistered {
                msisdn: s.msisdn.clone(),
            },
        ];
        for e in events {
            let meta = e.to_meta();
            assert!(RegistryEvent::is_registry_event(&meta));
            assert_eq!(RegistryEvent::from_meta(&meta).unwrap(), e);
        }
    }

    #[test]
    fn locks_at_threshold_and_unlocks() {
        let mut r = Registry::new(3);
        let s = subscriber("27820000001");
        r.apply(&RegistryEvent::Registered(s.clone())).unwrap();
        let fail = RegistryEvent::LoginFailed {
            msisdn: s.msisdn.clone(),
            channel: Channel::Ussd,
        };
        r.apply(&fail).unwrap();
        r.apply(&fail).unwrap();
        assert_eq!(r.get(&s.msisdn).unwrap().status, Status::Active);
        r.apply(&fail).unwrap();
        assert_eq!(r.get(&s.msisdn).unwrap().status, Status::Locked);
        assert_eq!(r.get_active(&s.msisdn).unwrap_err().code, ErrorCode::AccountLocked);
        r.apply(&RegistryEvent::Unlocked {
            msisdn: s.msisdn.clone(),
        })
        .unwrap();
        let s2 = r.get_active(&s.msisdn).unwrap();
        assert_eq!(s2.failed_attempts, 0);
    }

    #[test]
    fn duplicate_and_closed() {
        let mut r = Registry::new(3);
        let s = subscriber("27820000001");
        r.apply(&RegistryEvent::Registered(s.clone())).unwrap();
        assert_eq!(
            r.apply(&RegistryEvent::Registered(s.clone())).unwrap_err().code,
            ErrorCode::DuplicateRegistration
        );
        r.apply(&RegistryEvent::Deregistered {
            msisdn: s.msisdn.clone(),
        })
        .unwrap();
        assert_eq!(r.get(&s.msisdn).unwrap_err().code, ErrorCode::AccountClosed);
        // the number may be registered again once closed
        r.apply(&RegistryEvent::Registered(s.clone())).unwrap();
        assert_eq!(r.get(&s.msisdn).unwrap().status, Status::Active);
        assert_eq!(r.closed_subscribers().count(), 1);
    }

    #[test]
    fn msisdn_change_rekeys_and_moves_default_login() {
        let mut r = Registry::new(3);
        let s = subscriber("27820000001");
        r.apply(&RegistryEvent::Registered(s.clone())).unwrap();
        r.apply(&RegistryEvent::DetailsUpdated {
            msisdn: s.msisdn.clone(),
            changes: RecordedChanges {
                new_msisdn: Some("27820000011".into()),
                ..Default::default()
            },
        })
        .unwrap();
        assert!(!r.is_registered("27820000001"));
        assert_eq!(r.get("27820000011").unwrap().login_id, "27820000011");
    }

    #[test]
    fn answer_and_pin_rules() {
        assert_eq!(normalize_answer("  KaNanga "), "kananga");
        assert!(is_valid_pin("1234"));
        assert!(is_valid_pin("123456"));
        assert!(!is_valid_pin("123"));
        assert!(!is_valid_pin("1234567"));
        assert!(!is_valid_pin("12a4"));
        assert!(is_valid_password("abcdefgh"));
        assert!(!is_valid_password("short"));
    }
}
