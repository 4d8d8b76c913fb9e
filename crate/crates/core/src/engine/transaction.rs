use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorCode, Result};
use crate::money::Money;
use crate::time::Timestamp;

use super::codes::CodeState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TxnKind {
    P2p,
    WalletToBank,
    BankToBank,
    Recharge,
    Withdrawal,
    MerchantPayment,
}

impl TxnKind {
    pub const ALL: &'static [TxnKind] = &[
        TxnKind::P2p,
        TxnKind::WalletToBank,
        TxnKind::BankToBank,
        TxnKind::Recharge,
        TxnKind::Withdrawal,
        TxnKind::MerchantPayment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TxnKind::P2p => "P2P",
            TxnKind::WalletToBank => "WALLET_TO_BANK",
            TxnKind::BankToBank => "BANK_TO_BANK",
            TxnKind::Recharge => "RECHARGE",
            TxnKind::Withdrawal => "WITHDRAWAL",
            TxnKind::MerchantPayment => "MERCHANT_PAYMENT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        TxnKind::ALL.iter().copied().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TxnState {
    Initiated,
    Validated,
    Posted,
    Notified,
    Failed,
}

impl TxnState {
    /// INITIATED→VALIDATED→POSTED→NOTIFIED, FAILED only before posting.
    pub fn can_move_to(self, to: TxnState) -> bool {
        use TxnState::*;
        matches!(
            (self, to),
            (Initiated, Validated)
                | (Validated, Posted)
                | (Posted, Notified)
                | (Initiated, Failed)
                | (Validated, Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub txn_id: String,
    pub kind: TxnKind,
    pub sender: String,
    pub recipient: String,
    pub amount: Money,
    pub fee: Money,
    pub state: TxnState,
    pub failure_reason: Option<ErrorCode>,
    pub idempotency_key: String,
    #[serde(skip)]
    pub(crate) trail: Vec<TxnState>,
}

impl Transaction {
    pub(crate) fn initiated(
        txn_id: String,
        kind: TxnKind,
        sender: &str,
        recipient: &str,
        amount: Money,
        key: &str,
    ) -> Self {
        Self {
            txn_id,
            kind,
            sender: sender.into(),
            recipient: recipient.into(),
            amount,
            fee: Money::zero(amount.currency),
            state: TxnState::Initiated,
            failure_reason: None,
            idempotency_key: key.into(),
            trail: alloc::vec![TxnState::Initiated],
        }
    }

    pub fn advance(&mut self, to: TxnState) -> Result<()> {
        if !self.state.can_move_to(to) {
            return Err(Error::with_message(
                ErrorCode::Internal,
                alloc::format!("illegal transaction transition {:?} -> {:?}", self.state, to),
            ));
        }
        self.state = to;
        self.trail.push(to);
        Ok(())
    }

    pub fn trail(&self) -> &[TxnState] {
        &self.trail
    }
}

/// Response to a withdrawal request. The code itself travels only by SMS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WithdrawalReceipt {
    pub transaction: Transaction,
    pub code_id: String,
    pub issued_amount: Money,
    pub expires_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedemptionReceipt {
    pub txn_id: String,
    pub code_id: String,
    pub holder: String,
    pub amount: Money,
    pub remaining: Money,
    pub state: CodeState,
    pub idempotency_key: String,
}

/// Whatever a money-moving call answered, kept for idempotent replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outcome {
    Transaction(Transaction),
    Withdrawal(WithdrawalReceipt),
    Redemption(RedemptionReceipt),
}

impl Outcome {
    pub(crate) fn into_transaction(self) -> Result<Transaction> {
        match self {
            Outcome::Transaction(t) => Ok(t),
            _ => Err(Error::new(ErrorCode::IdempotencyConflict)),
        }
    }

    pub(crate) fn into_withdrawal(self) -> Result<WithdrawalReceipt> {
        match self {
            Outcome::Withdrawal(w) => Ok(w),
            _ => Err(Error::new(ErrorCode::IdempotencyConflict)),
        }
    }

    pub(crate) fn into_redemption(self) -> Result<RedemptionReceipt> {
        match self {
            Outcome::Redemption(r) => Ok(r),
            _ => Err(Error::new(ErrorCode::IdempotencyConflict)),
        }
    }
}
