//! The `#555*` menu tree as a per-session state machine.
//!
//! A session starts when a number dials the service code and is advanced
//! one input at a time. Every money operation a session performs uses the
//! idempotency key `ussd:<session_id>`, so a session can move money at most
//! once.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};

use chrono::TimeDelta;
use serde::{Deserialize, Serialize};

use crate::engine::{CodeTarget, Engine, FundingSource, TxnKind};
use crate::error::{Error, ErrorCode, Result};
use crate::identity::{Channel, DetailChanges};
use crate::money::parse_major_units;
use crate::providers::{Bank, Sms, Telco};
use crate::time::Timestamp;

pub const PIN_PROMPT: &str = "Welcome to eWallet\nEnter your PIN:";
pub const ROOT_MENU: &str = "1. Transfer money\n2. Withdraw money\n3. Change pin number\n4. Check your balance";
pub const TRANSFER_TARGET_MENU: &str = "1. Transfer money to your eWallet\n2. Transfer money to someone else";
pub const SOURCE_MENU: &str = "1. Bank account\n2. eWallet account";
pub const RECEIVER_MENU: &str =
    "1. Withdraw at any ATM\n2. Transfer money to a bank account\n3. Transfer money to someone else";
pub const NOT_REGISTERED_MENU: &str = "Welcome to eWallet\nYou are not registered.\n1. Create an account";
pub const RECIPIENT_PROMPT: &str = "Enter the cellphone number of the receiver:";
pub const BANK_PROMPT: &str = "Enter the bank account number:";
pub const AMOUNT_PROMPT: &str = "Enter the amount:";
pub const CODE_PROMPT: &str = "Enter the access code sent to you by SMS:";
pub const OLD_PIN_PROMPT: &str = "Enter your current PIN:";
pub const NEW_PIN_PROMPT: &str = "Enter your new PIN:";
pub const NAME_PROMPT: &str = "Enter your full name:";
pub const NEW_ACCOUNT_PIN_PROMPT: &str = "Choose a PIN (4 to 6 digits):";
pub const QUESTION_PROMPT: &str = "Enter a secret question:";
pub const ANSWER_PROMPT: &str = "Enter the answer to your secret question:";
pub const INVALID_SELECTION: &str = "Invalid selection";
pub const TOO_MANY_ATTEMPTS: &str = "Too many invalid attempts. Goodbye.";

pub fn incoming_funds_menu(amount: &str, registered: bool) -> String {
    if registered {
        format!("You have an incoming {amount}\n1. Withdraw the money\n2. Save it into your account")
    } else {
        format!("You have an incoming {amount}\n1. Withdraw the money\n2. Create an account to save your money")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UssdConfig {
    pub service_code: String,
    pub session_ttl: TimeDelta,
    pub max_invalid: u32,
    /// Amounts at or above this are confirmed before posting; 0 confirms all.
    pub confirm_threshold_minor: i64,
}

impl Default for UssdConfig {
    fn default() -> Self {
        Self {
            service_code: "#555*".into(),
            session_ttl: TimeDelta::seconds(120),
            max_invalid: 3,
            confirm_threshold_minor: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Node {
    PinPrompt,
    Root,
    TransferTarget,
    SourceSelect,
    RecipientMsisdn,
    RecipientBank,
    Amount,
    Confirm,
    IncomingFunds,
    ReceiverMenu,
    CodePrompt,
    ChangePinOld,
    ChangePinNew,
    NotRegistered,
    RegisterName,
    RegisterPin,
    RegisterQuestion,
    RegisterAnswer,
    Result,
    Ended,
}

/// What the session is collecting inputs for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Purpose {
    Recharge,
    SendMoney,
    Withdraw,
    WithdrawIncoming,
    CodeToBank,
    CodeToWallet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Screen {
    pub text: String,
    pub terminal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorCode>,
}

impl Screen {
    fn open(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            terminal: false,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UssdSession {
    pub session_id: String,
    pub msisdn: String,
    pub node: Node,
    pub collected: BTreeMap<String, String>,
    pub authenticated: bool,
    pub purpose: Option<Purpose>,
    pub invalid_count: u32,
    pub expires_at: Timestamp,
}

impl UssdSession {
    fn get(&self, k: &str) -> Option<&str> {
        self.collected.get(k).map(String::as_str)
    }

    fn put(&mut self, k: &str, v: impl Into<String>) {
        self.collected.insert(k.to_string(), v.into());
    }

    fn amount(&self) -> i64 {
        self.get("amount").and_then(|a| a.parse().ok()).unwrap_or(0)
    }
}

/// One input's result: either move to a node, end with a message, or
/// re-render the current node with an error line.
enum Next {
    Go(Node),
    Done(String, Option<ErrorCode>),
    Retry(String),
}

fn done_err(e: &Error) -> Next {
    Next::Done(e.message.clone(), Some(e.code))
}

#[derive(Debug, Default)]
pub struct Ussd {
    config: UssdConfig,
    sessions: BTreeMap<String, UssdSession>,
}

impl Ussd {
    pub fn new(config: UssdConfig) -> Self {
        Self {
            config,
            sessions: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &UssdConfig {
        &self.config
    }

    pub fn session(&self, id: &str) -> Option<&UssdSession> {
        self.sessions.get(id)
    }

    pub fn has_session(&self, id: &str) -> bool {
        self.sessions.contains_key(id)
    }

    pub fn begin_session<T: Telco, B: Bank, S: Sms>(
        &mut self,
        engine: &mut Engine<T, B, S>,
        session_id: &str,
        msisdn_raw: &str,
        dial: &str,
    ) -> Result<Screen> {
        if dial.trim() != self.config.service_code {
            return Err(Error::new(ErrorCode::WrongServiceCode));
        }
        let m = engine.valid_msisdn(msisdn_raw)?;
        let now = engine.now();
        let registered = engine.registry().is_registered(&m);
        let parked = engine.parked_for(&m);
        let node = if registered {
            Node::PinPrompt
        } else if parked > 0 {
            Node::IncomingFunds
        } else {
            Node::NotRegistered
        };
        let session = UssdSession {
            session_id: session_id.to_string(),
            msisdn: m,
            node,
            collected: BTreeMap::new(),
            authenticated: false,
            purpose: None,
            invalid_count: 0,
            expires_at: now + self.config.session_ttl,
        };
        let text = render(engine, &session);
        self.sessions.insert(session_id.to_string(), session);
        Ok(Screen::open(text))
    }

    pub fn step<T: Telco, B: Bank, S: Sms>(
        &mut self,
        engine: &mut Engine<T, B, S>,
        session_id: &str,
        input: &str,
    ) -> Result<Screen> {
        let now = engine.now();
        let mut s = match self.sessions.get(session_id) {
            None => return Err(Error::with_message(ErrorCode::NotFound, "no such session")),
            Some(s) if s.node == Node::Ended || s.node == Node::Result || now > s.expires_at => {
                return Err(Error::new(ErrorCode::SessionExpired))
            }
            Some(s) => s.clone(),
        };
        s.expires_at = now + self.config.session_ttl;
        let next = self.advance(engine, &mut s, input.trim());
        let screen = match next {
            Next::Go(node) => {
                s.node = node;
                s.invalid_count = 0;
                Screen::open(render(engine, &s))
            }
            Next::Done(text, error) => {
                s.node = Node::Ended;
                Screen {
                    text,
                    terminal: true,
                    error,
                }
            }
            Next::Retry(line) => {
                s.invalid_count += 1;
                if s.invalid_count >= self.config.max_invalid {
                    s.node = Node::Ended;
                    Screen {
                        text: TOO_MANY_ATTEMPTS.into(),
                        terminal: true,
                        error: Some(ErrorCode::InvalidSelection),
                    }
                } else {
                    Screen {
                        text: format!("{line}\n{}", render(engine, &s)),
                        terminal: false,
                        error: Some(ErrorCode::InvalidSelection),
                    }
                }
            }
        };
        self.sessions.insert(session_id.to_string(), s);
        Ok(screen)
    }

    /// Ends idle sessions and forgets finished ones. Returns how many idle
    /// sessions were ended.
    pub fn expire_sessions(&mut self, now: Timestamp) -> usize {
        let mut ended = 0;
        for s in self.sessions.values_mut() {
            if s.node != Node::Ended && now > s.expires_at {
                s.node = Node::Ended;
                ended += 1;
            }
        }
        let keep = self.config.session_ttl * 10;
        self.sessions.retain(|_, s| now <= s.expires_at + keep);
        ended
    }

    fn advance<T: Telco, B: Bank, S: Sms>(
        &self,
        engine: &mut Engine<T, B, S>,
        s: &mut UssdSession,
        input: &str,
    ) -> Next {
        let pick = |max: u32| -> Option<u32> {
            if input.is_empty() || !input.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            input.parse().ok().filter(|n| (1..=max).contains(n))
        };
        let m = s.msisdn.clone();
        match s.node {
            Node::PinPrompt => match engine.login(Channel::Ussd, &m, input) {
                Ok(_) => {
                    s.authenticated = true;
                    if engine.incoming_for(&m) > 0 {
                        s.put("amount", engine.incoming_for(&m).to_string());
                        Next::Go(Node::IncomingFunds)
                    } else {
                        Next::Go(Node::Root)
                    }
                }
                Err(e) if e.code == ErrorCode::InvalidLogin => Next::Retry(e.message),
                Err(e) => done_err(&e),
            },
            Node::Root => match pick(4) {
                Some(1) => Next::Go(Node::TransferTarget),
                Some(2) => {
                    s.purpose = Some(Purpose::Withdraw);
                    Next::Go(Node::Amount)
                }
                Some(3) => Next::Go(Node::ChangePinOld),
                Some(4) => match engine.check_balance(&m, crate::engine::Delivery::Display) {
                    Ok(b) => Next::Done(format!("Your eWallet balance is {}", b.render()), None),
                    Err(e) => done_err(&e),
                },
                _ => Next::Retry(INVALID_SELECTION.into()),
            },
            Node::TransferTarget => match pick(2) {
                Some(1) => {
                    if engine
                        .registry()
                        .get(&m)
                        .map(|x| x.bank_account.is_none())
                        .unwrap_or(true)
                    {
                        return done_err(&Error::new(ErrorCode::NoLinkedBankAccount));
                    }
                    s.purpose = Some(Purpose::Recharge);
                    Next::Go(Node::Amount)
                }
                Some(2) => {
                    s.purpose = Some(Purpose::SendMoney);
                    Next::Go(Node::Amount)
                }
                _ => Next::Retry(INVALID_SELECTION.into()),
            },
            Node::Amount => {
                let Some(amount) = parse_major_units(input).filter(|a| *a > 0) else {
                    return Next::Retry("Invalid amount".into());
                };
                s.put("amount", amount.to_string());
                match s.purpose {
                    Some(Purpose::SendMoney) => {
                        let fee = engine.config().fees.fee(TxnKind::P2p, amount);
                        let total = amount.saturating_add(fee);
                        if engine.wallet_balance(&m) >= total {
                            Next::Go(Node::SourceSelect)
                        } else if engine
                            .registry()
                            .get(&m)
                            .map(|x| x.bank_account.is_some())
                            .unwrap_or(false)
                        {
                            s.put("source", "BANK");
                            Next::Go(Node::RecipientMsisdn)
                        } else {
                            done_err(&Error::new(ErrorCode::NotSufficientFunds))
                        }
                    }
                    _ => self.confirm_or_run(engine, s),
                }
            }
            Node::SourceSelect => match pick(2) {
                Some(1) => {
                    if engine
                        .registry()
                        .get(&m)
                        .map(|x| x.bank_account.is_none())
                        .unwrap_or(true)
                    {
                        return Next::Retry(Error::new(ErrorCode::NoLinkedBankAccount).message);
                    }
                    s.put("source", "BANK");
                    Next::Go(Node::RecipientMsisdn)
                }
                Some(2) => {
                    s.put("source", "WALLET");
                    Next::Go(Node::RecipientMsisdn)
                }
                _ => Next::Retry(INVALID_SELECTION.into()),
            },
            Node::RecipientMsisdn => match engine.valid_msisdn(input) {
                Ok(r) if r == m => Next::Retry("You cannot send money to your own number".into()),
                Ok(r) => {
                    s.put("recipient", r);
                    self.confirm_or_run(engine, s)
                }
                Err(e) => Next::Retry(e.message),
            },
            Node::RecipientBank => {
                if input.is_empty() || !input.bytes().all(|b| b.is_ascii_digit()) {
                    return Next::Retry("Invalid bank account number".into());
                }
                s.put("bank", input);
                self.confirm_or_run(engine, s)
            }
            Node::Confirm => match pick(2) {
                Some(1) => run(engine, s),
                Some(2) => Next::Done("Transaction cancelled.".into(), None),
                _ => Next::Retry(INVALID_SELECTION.into()),
            },
            Node::IncomingFunds if s.authenticated => match pick(2) {
                Some(1) => {
                    s.purpose = Some(Purpose::WithdrawIncoming);
                    self.confirm_or_run(engine, s)
                }
                Some(2) => {
                    engine.clear_incoming(&m);
                    s.collected.clear();
                    Next::Go(Node::Root)
                }
                _ => Next::Retry(INVALID_SELECTION.into()),
            },
            Node::IncomingFunds => match pick(2) {
                Some(1) => Next::Go(Node::CodePrompt),
                Some(2) => Next::Go(Node::RegisterName),
                _ => Next::Retry(INVALID_SELECTION.into()),
            },
            Node::CodePrompt => match engine.verify_code(input, &m) {
                Ok(c) => {
                    // knowing the code stands in for the PIN of an unregistered holder
                    s.authenticated = true;
                    s.put("code", input);
                    s.put("amount", c.remaining.to_string());
                    Next::Go(Node::ReceiverMenu)
                }
                Err(e) if matches!(e.code, ErrorCode::CodeUnknown | ErrorCode::HolderMismatch) => {
                    Next::Retry("Invalid access code".into())
                }
                Err(e) => done_err(&e),
            },
            Node::ReceiverMenu => match pick(3) {
                Some(1) => Next::Done(
                    format!(
                        "Take your access code to any ATM to withdraw {}.",
                        engine.money(s.amount()).render()
                    ),
                    None,
                ),
                Some(2) => {
                    s.purpose = Some(Purpose::CodeToBank);
                    Next::Go(Node::RecipientBank)
                }
                Some(3) => {
                    s.purpose = Some(Purpose::CodeToWallet);
                    Next::Go(Node::RecipientMsisdn)
                }
                _ => Next::Retry(INVALID_SELECTION.into()),
            },
            Node::ChangePinOld => match engine.login(Channel::Ussd, &m, input) {
                Ok(_) => Next::Go(Node::ChangePinNew),
                Err(e) if e.code == ErrorCode::InvalidLogin => Next::Retry(e.message),
                Err(e) => done_err(&e),
            },
            Node::ChangePinNew => {
                let changes = DetailChanges {
                    pin: Some(input.to_string()),
                    ..DetailChanges::default()
                };
                match engine.update_details(Channel::Ussd, &m, &changes) {
                    Ok(_) => Next::Done(
                        "Your PIN has been changed. A confirmation was sent by SMS.".into(),
                        None,
                    ),
                    Err(e) if e.code == ErrorCode::ValidationFailed => Next::Retry(e.message),
                    Err(e) => done_err(&e),
                }
            }
            Node::NotRegistered => match pick(1) {
                Some(1) => Next::Go(Node::RegisterName),
                _ => Next::Retry(INVALID_SELECTION.into()),
            },
            Node::RegisterName => {
                if input.is_empty() {
                    return Next::Retry("Name is required".into());
                }
                s.put("name", input);
                Next::Go(Node::RegisterPin)
            }
            Node::RegisterPin => {
                if !crate::identity::is_valid_pin(input) {
                    return Next::Retry("PIN must be 4 to 6 digits".into());
                }
                s.put("pin", input);
                Next::Go(Node::RegisterQuestion)
            }
            Node::RegisterQuestion => {
                if input.is_empty() {
                    return Next::Retry("Question is required".into());
                }
                s.put("question", input);
                Next::Go(Node::RegisterAnswer)
            }
            Node::RegisterAnswer => {
                if input.is_empty() {
                    return Next::Retry("Answer is required".into());
                }
                let app = crate::engine::Application {
                    msisdn: m.clone(),
                    full_name: s.get("name").unwrap_or_default().to_string(),
                    pin: s.get("pin").unwrap_or_default().to_string(),
                    secret_question: s.get("question").unwrap_or_default().to_string(),
                    secret_answer: input.to_string(),
                    bank_account: None,
                };
                s.collected.remove("pin");
                match engine.register(&app) {
                    Ok(r) if r.claimed_minor > 0 => Next::Done(
                        format!(
                            "Your eWallet account has been created. {} was saved into your account. Your login details were sent by SMS.",
                            engine.money(r.claimed_minor).render()
                        ),
                        None,
                    ),
                    Ok(_) => Next::Done(
                        "Your eWallet account has been created. Your login details were sent by SMS.".into(),
                        None,
                    ),
                    Err(e) => done_err(&e),
                }
            }
            Node::Result | Node::Ended => Next::Done(String::new(), Some(ErrorCode::SessionExpired)),
        }
    }

    fn confirm_or_run<T: Telco, B: Bank, S: Sms>(&self, engine: &mut Engine<T, B, S>, s: &mut UssdSession) -> Next {
        if s.amount() >= self.config.confirm_threshold_minor {
            Next::Go(Node::Confirm)
        } else {
            run(engine, s)
        }
    }
}

/// Performs the session's single money operation.
fn run<T: Telco, B: Bank, S: Sms>(engine: &mut Engine<T, B, S>, s: &mut UssdSession) -> Next {
    if !s.authenticated {
        return done_err(&Error::new(ErrorCode::Unauthorized));
    }
    let key = format!("ussd:{}", s.session_id);
    let m = s.msisdn.clone();
    let amount = s.amount();
    let money = |minor: i64| engine.money(minor).render();
    let ok = |text: String| Next::Done(format!("transaction successful\n{text}"), None);
    match s.purpose {
        Some(Purpose::SendMoney) => {
            let source = match s.get("source") {
                Some("BANK") => FundingSource::Bank,
                _ => FundingSource::Wallet,
            };
            let to = s.get("recipient").unwrap_or_default().to_string();
            let shown = money(amount);
            match engine.transfer_wallet_to_wallet(&m, &to, amount, source, &key) {
                Ok(_) => ok(format!("{shown} sent to {to}")),
                Err(e) => done_err(&e),
            }
        }
        Some(Purpose::Recharge) => match engine.recharge(&m, amount, &key) {
            Ok(_) => ok(format!(
                "Your eWallet balance is {}",
                engine.money(engine.wallet_balance(&m)).render()
            )),
            Err(e) => done_err(&e),
        },
        Some(Purpose::Withdraw) | Some(Purpose::WithdrawIncoming) => {
            match engine.request_withdrawal(&m, amount, &key) {
                Ok(r) => {
                    if s.purpose == Some(Purpose::WithdrawIncoming) {
                        engine.clear_incoming(&m);
                    }
                    ok(format!(
                        "Your access code for {} has been sent by SMS",
                        r.issued_amount.render()
                    ))
                }
                Err(e) => done_err(&e),
            }
        }
        Some(Purpose::CodeToBank) | Some(Purpose::CodeToWallet) => {
            let code = s.get("code").unwrap_or_default().to_string();
            let target = if s.purpose == Some(Purpose::CodeToBank) {
                CodeTarget::Bank(s.get("bank").unwrap_or_default().to_string())
            } else {
                CodeTarget::Wallet(s.get("recipient").unwrap_or_default().to_string())
            };
            match engine.transfer_from_code(&m, &code, &target, &key) {
                Ok(t) => ok(format!("{} sent to {}", t.amount.render(), t.recipient)),
                Err(e) => done_err(&e),
            }
        }
        None => done_err(&Error::new(ErrorCode::Internal)),
    }
}

fn render<T: Telco, B: Bank, S: Sms>(engine: &Engine<T, B, S>, s: &UssdSession) -> String {
    let money = |minor: i64| engine.money(minor).render();
    match s.node {
        Node::PinPrompt => PIN_PROMPT.into(),
        Node::Root => ROOT_MENU.into(),
        Node::TransferTarget => TRANSFER_TARGET_MENU.into(),
        Node::SourceSelect => SOURCE_MENU.into(),
        Node::RecipientMsisdn => RECIPIENT_PROMPT.into(),
        Node::RecipientBank => BANK_PROMPT.into(),
        Node::Amount => AMOUNT_PROMPT.into(),
        Node::IncomingFunds => {
            let registered = engine.registry().is_registered(&s.msisdn);
            let amount = if registered {
                engine.incoming_for(&s.msisdn)
            } else {
                engine.parked_for(&s.msisdn)
            };
            incoming_funds_menu(&money(amount), registered)
        }
        Node::ReceiverMenu => RECEIVER_MENU.into(),
        Node::CodePrompt => CODE_PROMPT.into(),
        Node::ChangePinOld => OLD_PIN_PROMPT.into(),
        Node::ChangePinNew => NEW_PIN_PROMPT.into(),
        Node::NotRegistered => NOT_REGISTERED_MENU.into(),
        Node::RegisterName => NAME_PROMPT.into(),
        Node::RegisterPin => NEW_ACCOUNT_PIN_PROMPT.into(),
        Node::RegisterQuestion => QUESTION_PROMPT.into(),
        Node::RegisterAnswer => ANSWER_PROMPT.into(),
        Node::Confirm => confirm_text(engine, s),
        Node::Result | Node::Ended => String::new(),
    }
}

fn confirm_text<T: Telco, B: Bank, S: Sms>(engine: &Engine<T, B, S>, s: &UssdSession) -> String {
    let amount = s.amount();
    let shown = engine.money(amount).render();
    let fees = &engine.config().fees;
    let (line, fee) = match s.purpose {
        Some(Purpose::SendMoney) => {
            let from = if s.get("source") == Some("BANK") {
                "bank account"
            } else {
                "eWallet account"
            };
            (
                format!(
                    "Send {shown} to {} from your {from}?",
                    s.get("recipient").unwrap_or_default()
                ),
                fees.fee(TxnKind::P2p, amount),
            )
        }
        Some(Purpose::Recharge) => (
            format!("Transfer {shown} from your bank account to your eWallet?"),
            fees.fee(TxnKind::Recharge, amount),
        ),
        Some(Purpose::Withdraw) | Some(Purpose::WithdrawIncoming) => (
            format!("Withdraw {shown} from your eWallet?"),
            fees.fee(TxnKind::Withdrawal, amount),
        ),
        Some(Purpose::CodeToBank) => (
            format!("Send {shown} to bank account {}?", s.get("bank").unwrap_or_default()),
            fees.fee(TxnKind::WalletToBank, amount),
        ),
        Some(Purpose::CodeToWallet) => (
            format!("Send {shown} to {}?", s.get("recipient").unwrap_or_default()),
            fees.fee(TxnKind::P2p, amount),
        ),
        None => (String::new(), 0),
    };
    if fee > 0 {
        format!("{line}\nFee: {}\n1. Confirm\n2. Cancel", engine.money(fee).render())
    } else {
        format!("{line}\n1. Confirm\n2. Cancel")
    }
}
