//! Money-moving operations. Each takes an idempotency key; a repeat with
//! the same request returns the stored outcome, a different request under
//! the same key is refused.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::codes::{code_digest, AccessCode, CodeEvent, CodeOrigin, CodeState};
use super::transaction::{Outcome, RedemptionReceipt, Transaction, TxnKind, TxnState, WithdrawalReceipt};
use super::{keys, request_fp, Engine, Op};
use crate::error::{Error, ErrorCode, FieldReason, Result};
use crate::identity::Subscriber;
use crate::ledger::{AccountId, EntryType, JournalEntry, NewEntry, Posting};
use crate::msisdn;
use crate::providers::{Bank, EftDirection, Sms, Telco};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FundingSource {
    /// Wallet when it covers amount + fee, else the linked bank account.
    #[default]
    Auto,
    Wallet,
    Bank,
}

impl FundingSource {
    fn as_str(self) -> &'static str {
        match self {
            FundingSource::Auto => "AUTO",
            FundingSource::Wallet => "WALLET",
            FundingSource::Bank => "BANK",
        }
    }
}

/// How a buyer pays at the point of sale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MerchantFunding {
    Code(String),
    Wallet,
}

/// Where a code holder sends the money a code carries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CodeTarget {
    Bank(String),
    Wallet(String),
}

enum Funding {
    Wallet,
    Bank(String),
}

fn amount_check(amount: i64) -> Result<()> {
    if amount <= 0 {
        return Err(Error::with_message(
            ErrorCode::AmountInvalid,
            "Amount must be greater than zero",
        ));
    }
    Ok(())
}

fn total_of(amount: i64, fee: i64) -> Result<i64> {
    amount
        .checked_add(fee)
        .ok_or_else(|| Error::with_message(ErrorCode::AmountInvalid, "Amount is too large"))
}

fn nsf() -> Error {
    Error::new(ErrorCode::NotSufficientFunds)
}

impl<T: Telco, B: Bank, S: Sms> Engine<T, B, S> {
    fn start(&mut self, kind: TxnKind, sender: &str, recipient: &str, amount: i64, key: &str) -> Transaction {
        let id = self.new_id("tx");
        Transaction::initiated(id, kind, sender, recipient, self.money(amount), key)
    }

    fn norm(raw: &str) -> String {
        msisdn::normalize(raw).unwrap_or_else(|| raw.trim().to_string())
    }

    /// Runs a transaction body, recording a FAILED transaction on error.
    fn run<F>(&mut self, mut txn: Transaction, body: F) -> Result<Transaction>
    where
        F: FnOnce(&mut Self, &mut Transaction) -> Result<JournalEntry>,
    {
        match body(self, &mut txn) {
            Ok(entry) => {
                txn.advance(TxnState::Posted)?;
                txn.advance(TxnState::Notified)?;
                match self.outcome_from_entry(&entry)? {
                    Outcome::Transaction(mut t) => {
                        t.trail = txn.trail.clone();
                        Ok(t)
                    }
                    Outcome::Withdrawal(w) => Ok(w.transaction),
                    Outcome::Redemption(_) => Err(Error::new(ErrorCode::Internal)),
                }
            }
            Err(e) => Err(self.fail(txn, e)),
        }
    }

    fn choose_source(&mut self, sender: &Subscriber, requested: FundingSource, total: i64) -> Result<Funding> {
        let wallet = self.wallet_balance(&sender.msisdn);
        match requested {
            FundingSource::Wallet if wallet >= total => Ok(Funding::Wallet),
            FundingSource::Wallet => Err(nsf()),
            FundingSource::Bank => sender
                .bank_account
                .clone()
                .map(Funding::Bank)
                .ok_or_else(|| Error::new(ErrorCode::NoLinkedBankAccount)),
            FundingSource::Auto if wallet >= total => Ok(Funding::Wallet),
            FundingSource::Auto => match &sender.bank_account {
                Some(b) if self.providers.bank.available(b)? >= total => Ok(Funding::Bank(b.clone())),
                _ => Err(nsf()),
            },
        }
    }

    fn bank_check(&mut self, number: &str) -> Result<String> {
        let number = number.trim();
        if number.is_empty() || !self.providers.bank.validate_account(number)?.valid {
            return Err(Error::with_message(
                ErrorCode::UnknownBankAccount,
                format!("bank account {number} was not found"),
            ));
        }
        Ok(number.to_string())
    }

    /// A wallet-to-wallet transfer. An unregistered but valid recipient
    /// number gets the money parked behind an access code until they
    /// register or withdraw it.
    pub fn transfer_wallet_to_wallet(
        &mut self,
        sender: &str,
        recipient: &str,
        amount_minor: i64,
        source: FundingSource,
        key: &str,
    ) -> Result<Transaction> {
        let (sender, recipient) = (Self::norm(sender), Self::norm(recipient));
        let fp = request_fp(
            Op::P2p,
            &[&sender, &recipient, &amount_minor.to_string(), source.as_str()],
        );
        if let Some(o) = self.replayed(key, &fp)? {
            return o.into_transaction();
        }
        let txn = self.start(TxnKind::P2p, &sender, &recipient, amount_minor, key);
        let (mut parcel_code, mut parked) = (None, false);
        let out = self.run(txn, |e, txn| {
            amount_check(amount_minor)?;
            let s = e.registry.get_active(&sender)?.clone();
            let to = e.valid_msisdn(&recipient)?;
            if to == s.msisdn {
                return Err(Error::validation(vec![FieldReason::new(
                    "recipient",
                    "cannot be your own number",
                )]));
            }
            let fee = e.config.fees.fee(TxnKind::P2p, amount_minor);
            txn.fee = e.money(fee);
            txn.advance(TxnState::Validated)?;
            let total = total_of(amount_minor, fee)?;
            let funding = e.choose_source(&s, source, total)?;
            parked = !e.registry.is_registered(&to);
            let mut meta = e.money_meta(Op::P2p, txn, &fp);
            let c = e.config.currency;
            let (from, legs) = match &funding {
                Funding::Wallet => {
                    meta.insert(keys::SOURCE.into(), "WALLET".into());
                    (AccountId::wallet(&s.msisdn), Vec::new())
                }
                Funding::Bank(b) => {
                    meta.insert(keys::SOURCE.into(), "BANK".into());
                    (AccountId::bank_mirror(b), vec![(EftDirection::Debit, b.clone(), total)])
                }
            };
            let target = if parked {
                let (code, digest) = e.fresh_code();
                let id = e.new_id("ac");
                CodeEvent::Issued {
                    id,
                    digest,
                    holder: to.clone(),
                    amount: amount_minor,
                    expires_at: e.now() + e.config.code_ttl,
                    origin: CodeOrigin::Parcel {
                        sender: s.msisdn.clone(),
                    },
                }
                .write(&mut meta);
                parcel_code = Some(code);
                AccountId::suspense()
            } else {
                e.ensure_open(&AccountId::wallet(&to))?;
                AccountId::wallet(&to)
            };
            let mut postings = vec![Posting::new(from, -total, c), Posting::new(target, amount_minor, c)];
            if fee > 0 {
                postings.push(Posting::new(AccountId::fee_income(), fee, c));
            }
            let new = NewEntry {
                entry_type: EntryType::P2p,
                txn_id: txn.txn_id.clone(),
                postings,
                meta,
            };
            e.post_with_eft(&legs, new, Some(key))
        })?;
        let amount = self.money(amount_minor).render();
        if parked {
            let code = parcel_code.unwrap_or_default();
            let service = self.config.service_code.clone();
            self.notify(
                &out.recipient,
                &format!(
                    "You have an incoming {amount} from {}. Dial {service} to collect it or create an account. Your access code is {code}.",
                    out.sender
                ),
            );
        } else {
            self.bump_incoming(&out.recipient, amount_minor);
            self.notify(
                &out.recipient,
                &format!("You have an incoming {amount} from {}.", out.sender),
            );
        }
        let balance = self.money(self.wallet_balance(&out.sender)).render();
        self.notify(
            &out.sender,
            &format!(
                "transaction successful. {amount} sent to {}. Your balance is {balance}.",
                out.recipient
            ),
        );
        Ok(out)
    }

    pub fn transfer_wallet_to_bank(
        &mut self,
        sender: &str,
        bank_account: &str,
        amount_minor: i64,
        key: &str,
    ) -> Result<Transaction> {
        let sender = Self::norm(sender);
        let account = bank_account.trim().to_string();
        let fp = request_fp(Op::WalletToBank, &[&sender, &account, &amount_minor.to_string()]);
        if let Some(o) = self.replayed(key, &fp)? {
            return o.into_transaction();
        }
        let txn = self.start(TxnKind::WalletToBank, &sender, &account, amount_minor, key);
        let out = self.run(txn, |e, txn| {
            amount_check(amount_minor)?;
            let s = e.registry.get_active(&sender)?.clone();
            let account = e.bank_check(&account)?;
            let fee = e.config.fees.fee(TxnKind::WalletToBank, amount_minor);
            txn.fee = e.money(fee);
            txn.advance(TxnState::Validated)?;
            let total = total_of(amount_minor, fee)?;
            if e.wallet_balance(&s.msisdn) < total {
                return Err(nsf());
            }
            let c = e.config.currency;
            let mut postings = vec![
                Posting::new(AccountId::wallet(&s.msisdn), -total, c),
                Posting::new(AccountId::bank_mirror(&account), amount_minor, c),
            ];
            if fee > 0 {
                postings.push(Posting::new(AccountId::fee_income(), fee, c));
            }
            let meta = e.money_meta(Op::WalletToBank, txn, &fp);
            let new = NewEntry {
                entry_type: EntryType::WalletToBank,
                txn_id: txn.txn_id.clone(),
                postings,
                meta,
            };
            e.post_with_eft(&[(EftDirection::Credit, account, amount_minor)], new, Some(key))
        })?;
        let amount = self.money(amount_minor).render();
        self.notify_account_holder(
            &out.recipient,
            &format!(
                "You have an incoming {amount} from {} into bank account {}.",
                out.sender, out.recipient
            ),
        );
        let balance = self.money(self.wallet_balance(&out.sender)).render();
        self.notify(
            &out.sender,
            &format!(
                "transaction successful. {amount} sent to bank account {}. Your balance is {balance}.",
                out.recipient
            ),
        );
        Ok(out)
    }

    /// Subscribers whose linked account is `number` hear about credits to it.
    fn notify_account_holder(&mut self, number: &str, text: &str) {
        let holders: Vec<String> = self
            .registry
            .subscribers()
            .filter(|s| s.bank_account.as_deref() == Some(number))
            .map(|s| s.msisdn.clone())
            .collect();
        for h in holders {
            self.notify(&h, text);
        }
    }

    pub fn transfer_bank_to_bank(
        &mut self,
        sender: &str,
        bank_account: &str,
        amount_minor: i64,
        key: &str,
    ) -> Result<Transaction> {
        let sender = Self::norm(sender);
        let account = bank_account.trim().to_string();
        let fp = request_fp(Op::BankToBank, &[&sender, &account, &amount_minor.to_string()]);
        if let Some(o) = self.replayed(key, &fp)? {
            return o.into_transaction();
        }
        let txn = self.start(TxnKind::BankToBank, &sender, &account, amount_minor, key);
        let out = self.run(txn, |e, txn| {
            amount_check(amount_minor)?;
            let s = e.registry.get_active(&sender)?.clone();
            let own = s
                .bank_account
                .clone()
                .ok_or_else(|| Error::new(ErrorCode::NoLinkedBankAccount))?;
            let account = e.bank_check(&account)?;
            if account == own {
                return Err(Error::validation(vec![FieldReason::new(
                    "bank_account",
                    "cannot be your own linked account",
                )]));
            }
            let fee = e.config.fees.fee(TxnKind::BankToBank, amount_minor);
            txn.fee = e.money(fee);
            txn.advance(TxnState::Validated)?;
            let total = total_of(amount_minor, fee)?;
            let c = e.config.currency;
            let mut postings = vec![
                Posting::new(AccountId::bank_mirror(&own), -total, c),
                Posting::new(AccountId::bank_mirror(&account), amount_minor, c),
            ];
            if fee > 0 {
                postings.push(Posting::new(AccountId::fee_income(), fee, c));
            }
            let meta = e.money_meta(Op::BankToBank, txn, &fp);
            let new = NewEntry {
                entry_type: EntryType::BankToBank,
                txn_id: txn.txn_id.clone(),
                postings,
                meta,
            };
            e.post_with_eft(
                &[
                    (EftDirection::Debit, own, total),
                    (EftDirection::Credit, account, amount_minor),
                ],
                new,
                Some(key),
            )
        })?;
        let amount = self.money(amount_minor).render();
        self.notify_account_holder(
            &out.recipient,
            &format!(
                "You have an incoming {amount} from {} into bank account {}.",
                out.sender, out.recipient
            ),
        );
        self.notify(
            &out.sender,
            &format!(
                "transaction successful. {amount} sent from your bank account to bank account {}.",
                out.recipient
            ),
        );
        Ok(out)
    }

    /// Loads the wallet from the linked bank account; the fee comes out of
    /// the loaded amount.
    pub fn recharge(&mut self, msisdn: &str, amount_minor: i64, key: &str) -> Result<Transaction> {
        let m = Self::norm(msisdn);
        let fp = request_fp(Op::Recharge, &[&m, &amount_minor.to_string()]);
        if let Some(o) = self.replayed(key, &fp)? {
            return o.into_transaction();
        }
        let txn = self.start(TxnKind::Recharge, &m, &m, amount_minor, key);
        let out = self.run(txn, |e, txn| {
            amount_check(amount_minor)?;
            let s = e.registry.get_active(&m)?.clone();
            let bank = s
                .bank_account
                .clone()
                .ok_or_else(|| Error::new(ErrorCode::NoLinkedBankAccount))?;
            let fee = e.config.fees.fee(TxnKind::Recharge, amount_minor);
            if fee >= amount_minor {
                return Err(Error::with_message(
                    ErrorCode::AmountInvalid,
                    "Amount does not cover the fee",
                ));
            }
            txn.fee = e.money(fee);
            txn.advance(TxnState::Validated)?;
            let c = e.config.currency;
            let mut postings = vec![
                Posting::new(AccountId::bank_mirror(&bank), -amount_minor, c),
                Posting::new(AccountId::wallet(&m), amount_minor - fee, c),
            ];
            if fee > 0 {
                postings.push(Posting::new(AccountId::fee_income(), fee, c));
            }
            let mut meta = e.money_meta(Op::Recharge, txn, &fp);
            meta.insert(keys::SOURCE.into(), "BANK".into());
            let new = NewEntry {
                entry_type: EntryType::Recharge,
                txn_id: txn.txn_id.clone(),
                postings,
                meta,
            };
            e.post_with_eft(&[(EftDirection::Debit, bank, amount_minor)], new, Some(key))
        })?;
        let balance = self.money(self.wallet_balance(&m)).render();
        self.notify(
            &m,
            &format!(
                "transaction successful. Your eWallet was recharged with {} from your bank account. Your balance is {balance}.",
                self.money(amount_minor - out.fee.amount_minor).render()
            ),
        );
        Ok(out)
    }

    /// Holds `amount` in SUSPENSE behind a new access code, sent by SMS only.
    pub fn request_withdrawal(&mut self, msisdn: &str, amount_minor: i64, key: &str) -> Result<WithdrawalReceipt> {
        let m = Self::norm(msisdn);
        let fp = request_fp(Op::Withdrawal, &[&m, &amount_minor.to_string()]);
        if let Some(o) = self.replayed(key, &fp)? {
            return o.into_withdrawal();
        }
        let txn = self.start(TxnKind::Withdrawal, &m, &m, amount_minor, key);
        let mut issued = None;
        let out = self.run(txn, |e, txn| {
            amount_check(amount_minor)?;
            let s = e.registry.get_active(&m)?.clone();
            let fee = e.config.fees.fee(TxnKind::Withdrawal, amount_minor);
            txn.fee = e.money(fee);
            txn.advance(TxnState::Validated)?;
            let total = total_of(amount_minor, fee)?;
            if e.wallet_balance(&s.msisdn) < total {
                return Err(nsf());
            }
            let (code, digest) = e.fresh_code();
            let id = e.new_id("ac");
            let mut meta = e.money_meta(Op::Withdrawal, txn, &fp);
            CodeEvent::Issued {
                id,
                digest,
                holder: m.clone(),
                amount: amount_minor,
                expires_at: e.now() + e.config.code_ttl,
                origin: CodeOrigin::Withdrawal,
            }
            .write(&mut meta);
            let c = e.config.currency;
            let mut postings = vec![
                Posting::new(AccountId::wallet(&m), -total, c),
                Posting::new(AccountId::suspense(), amount_minor, c),
            ];
            if fee > 0 {
                postings.push(Posting::new(AccountId::fee_income(), fee, c));
            }
            let new = NewEntry {
                entry_type: EntryType::WithdrawalHold,
                txn_id: txn.txn_id.clone(),
                postings,
                meta,
            };
            let entry = e.post(new, Some(key))?;
            issued = Some(code);
            Ok(entry)
        })?;
        let receipt = self
            .replayed(key, &fp)?
            .ok_or_else(|| Error::new(ErrorCode::Internal))?
            .into_withdrawal()?;
        let code = issued.unwrap_or_default();
        let expires = receipt.expires_at.format("%Y-%m-%d %H:%M UTC");
        self.notify(
            &m,
            &format!(
                "Your eWallet access code is {code} for {}. Use it at any ATM or participating seller before {expires}.",
                out.amount.render()
            ),
        );
        Ok(WithdrawalReceipt {
            transaction: out,
            ..receipt
        })
    }

    /// Checks a code typed by `holder`, expiring it first if its time is up.
    pub fn verify_code(&mut self, code: &str, holder: &str) -> Result<AccessCode> {
        self.usable_code(code, &Self::norm(holder))
    }

    fn usable_code(&mut self, code: &str, holder: &str) -> Result<AccessCode> {
        let c = self
            .codes
            .lookup(code)
            .cloned()
            .ok_or_else(|| Error::new(ErrorCode::CodeUnknown))?;
        if c.holder != holder {
            return Err(Error::new(ErrorCode::HolderMismatch));
        }
        match c.state {
            CodeState::Redeemed => return Err(Error::new(ErrorCode::CodeAlreadyRedeemed)),
            CodeState::Expired => return Err(Error::new(ErrorCode::CodeExpired)),
            CodeState::Cancelled => return Err(Error::new(ErrorCode::CodeUnknown)),
            CodeState::Issued | CodeState::PartiallyRedeemed => {}
        }
        if c.is_expired_at(self.now()) {
            self.expire_code(&c.id)?;
            return Err(Error::new(ErrorCode::CodeExpired));
        }
        Ok(c)
    }

    /// Cash out at an ATM: SUSPENSE → ATM cash pool. Partial amounts leave
    /// the rest on the code.
    pub fn redeem_at_atm(
        &mut self,
        code: &str,
        holder: &str,
        amount_minor: i64,
        key: &str,
    ) -> Result<RedemptionReceipt> {
        let holder = Self::norm(holder);
        let digest = code_digest(code);
        let fp = request_fp(Op::AtmRedeem, &[&digest, &holder, &amount_minor.to_string()]);
        if let Some(o) = self.replayed(key, &fp)? {
            return o.into_redemption();
        }
        amount_check(amount_minor)?;
        let c = self.usable_code(code, &holder)?;
        if amount_minor > c.remaining {
            return Err(Error::with_message(
                ErrorCode::AmountExceedsRemaining,
                format!("Only {} remains on this code", self.money(c.remaining).render()),
            ));
        }
        let remaining = c.remaining - amount_minor;
        let state = if remaining == 0 {
            CodeState::Redeemed
        } else {
            CodeState::PartiallyRedeemed
        };
        let mut meta = crate::ledger::Meta::new();
        meta.insert(keys::OP.into(), Op::AtmRedeem.as_str().into());
        meta.insert(keys::SENDER.into(), holder.clone());
        meta.insert(keys::AMOUNT.into(), amount_minor.to_string());
        meta.insert(keys::REQUEST_FP.into(), fp.clone());
        meta.insert(keys::CODE_REMAINING_AFTER.into(), remaining.to_string());
        meta.insert(keys::CODE_STATE_AFTER.into(), state.as_str().into());
        CodeEvent::Redeemed {
            id: c.id.clone(),
            amount: amount_minor,
        }
        .write(&mut meta);
        let txn_id = self.new_id("tx");
        let cur = self.config.currency;
        let entry = self.post(
            NewEntry {
                entry_type: EntryType::Redemption,
                txn_id,
                postings: vec![
                    Posting::new(AccountId::suspense(), -amount_minor, cur),
                    Posting::new(AccountId::atm_cash_pool(), amount_minor, cur),
                ],
                meta,
            },
            Some(key),
        )?;
        let receipt = self.outcome_from_entry(&entry)?.into_redemption()?;
        let text = if remaining == 0 {
            format!("You withdrew {} at the ATM.", receipt.amount.render())
        } else {
            format!(
                "You withdrew {} at the ATM. {} remains on your access code.",
                receipt.amount.render(),
                receipt.remaining.render()
            )
        };
        self.notify(&holder, &text);
        Ok(receipt)
    }

    /// Point-of-sale payment to a registered seller, verified either with
    /// the buyer's access code or from the buyer's wallet.
    pub fn pay_merchant(
        &mut self,
        buyer: &str,
        seller: &str,
        amount_minor: i64,
        funding: &MerchantFunding,
        key: &str,
    ) -> Result<Transaction> {
        let (buyer, seller) = (Self::norm(buyer), Self::norm(seller));
        let mode = match funding {
            MerchantFunding::Code(code) => code_digest(code),
            MerchantFunding::Wallet => "WALLET".to_string(),
        };
        let fp = request_fp(
            Op::MerchantPayment,
            &[&buyer, &seller, &amount_minor.to_string(), &mode],
        );
        if let Some(o) = self.replayed(key, &fp)? {
            return o.into_transaction();
        }
        let txn = self.start(TxnKind::MerchantPayment, &buyer, &seller, amount_minor, key);
        let out = self.run(txn, |e, txn| {
            amount_check(amount_minor)?;
            e.registry.get_active(&seller)?;
            if buyer == seller {
                return Err(Error::validation(vec![FieldReason::new(
                    "seller",
                    "cannot be the buyer",
                )]));
            }
            let fee = e.config.fees.fee(TxnKind::MerchantPayment, amount_minor);
            txn.fee = e.money(fee);
            let total = total_of(amount_minor, fee)?;
            let mut meta = e.money_meta(Op::MerchantPayment, txn, &fp);
            let from = match funding {
                MerchantFunding::Code(code) => {
                    let c = e.usable_code(code, &buyer)?;
                    if total > c.remaining {
                        return Err(Error::with_message(
                            ErrorCode::AmountExceedsRemaining,
                            format!("Only {} remains on this code", e.money(c.remaining).render()),
                        ));
                    }
                    let remaining = c.remaining - total;
                    meta.insert(keys::SOURCE.into(), "CODE".into());
                    meta.insert(keys::CODE_REMAINING_AFTER.into(), remaining.to_string());
                    CodeEvent::Redeemed {
                        id: c.id,
                        amount: total,
                    }
                    .write(&mut meta);
                    AccountId::suspense()
                }
                MerchantFunding::Wallet => {
                    e.registry.get_active(&buyer)?;
                    if e.wallet_balance(&buyer) < total {
                        return Err(nsf());
                    }
                    meta.insert(keys::SOURCE.into(), "WALLET".into());
                    AccountId::wallet(&buyer)
                }
            };
            txn.advance(TxnState::Validated)?;
            let c = e.config.currency;
            let mut postings = vec![
                Posting::new(from, -total, c),
                Posting::new(AccountId::wallet(&seller), amount_minor, c),
            ];
            if fee > 0 {
                postings.push(Posting::new(AccountId::fee_income(), fee, c));
            }
            let new = NewEntry {
                entry_type: EntryType::MerchantPayment,
                txn_id: txn.txn_id.clone(),
                postings,
                meta,
            };
            e.post(new, Some(key))
        })?;
        let amount = out.amount.render();
        let how = match funding {
            MerchantFunding::Code(_) => " (verified with access code)",
            MerchantFunding::Wallet => "",
        };
        self.notify(
            &out.recipient,
            &format!("You received a payment of {amount} from {}{how}.", out.sender),
        );
        self.notify(
            &out.sender,
            &format!("transaction successful. You paid {amount} to {}.", out.recipient),
        );
        Ok(out)
    }

    /// Sends everything left on a code to a bank account or a registered
    /// wallet. The fee comes out of the code's value.
    pub fn transfer_from_code(
        &mut self,
        holder: &str,
        code: &str,
        target: &CodeTarget,
        key: &str,
    ) -> Result<Transaction> {
        let holder = Self::norm(holder);
        let (kind, to, target_tag) = match target {
            CodeTarget::Bank(b) => (TxnKind::WalletToBank, b.trim().to_string(), "BANK"),
            CodeTarget::Wallet(w) => (TxnKind::P2p, Self::norm(w), "WALLET"),
        };
        let fp = request_fp(Op::CodeTransfer, &[&holder, &code_digest(code), target_tag, &to]);
        if let Some(o) = self.replayed(key, &fp)? {
            return o.into_transaction();
        }
        let txn = self.start(kind, &holder, &to, 0, key);
        let out = self.run(txn, |e, txn| {
            let c = e.usable_code(code, &holder)?;
            let fee = e.config.fees.fee(kind, c.remaining);
            let net = c.remaining - fee;
            if net <= 0 {
                return Err(Error::with_message(
                    ErrorCode::AmountInvalid,
                    "Amount does not cover the fee",
                ));
            }
            let (target_account, legs) = match target {
                CodeTarget::Bank(_) => {
                    let b = e.bank_check(&to)?;
                    (AccountId::bank_mirror(&b), vec![(EftDirection::Credit, b, net)])
                }
                CodeTarget::Wallet(_) => {
                    e.registry.get(&to)?;
                    (AccountId::wallet(&to), Vec::new())
                }
            };
            txn.amount = e.money(net);
            txn.fee = e.money(fee);
            txn.advance(TxnState::Validated)?;
            let mut meta = e.money_meta(Op::CodeTransfer, txn, &fp);
            meta.insert(keys::SOURCE.into(), "CODE".into());
            CodeEvent::Redeemed {
                id: c.id.clone(),
                amount: c.remaining,
            }
            .write(&mut meta);
            let cur = e.config.currency;
            let mut postings = vec![
                Posting::new(AccountId::suspense(), -c.remaining, cur),
                Posting::new(target_account, net, cur),
            ];
            if fee > 0 {
                postings.push(Posting::new(AccountId::fee_income(), fee, cur));
            }
            let entry_type = if kind == TxnKind::P2p {
                EntryType::P2p
            } else {
                EntryType::WalletToBank
            };
            let new = NewEntry {
                entry_type,
                txn_id: txn.txn_id.clone(),
                postings,
                meta,
            };
            e.post_with_eft(&legs, new, Some(key))
        })?;
        let amount = out.amount.render();
        match target {
            CodeTarget::Wallet(_) => {
                self.bump_incoming(&out.recipient, out.amount.amount_minor);
                self.notify(
                    &out.recipient,
                    &format!("You have an incoming {amount} from {}.", out.sender),
                );
            }
            CodeTarget::Bank(_) => {
                self.notify_account_holder(
                    &out.recipient,
                    &format!(
                        "You have an incoming {amount} from {} into bank account {}.",
                        out.sender, out.recipient
                    ),
                );
            }
        }
        self.notify(
            &holder,
            &format!("transaction successful. {amount} sent to {}.", out.recipient),
        );
        Ok(out)
    }
}
