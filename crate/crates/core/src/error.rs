use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Machine-readable error codes shared by every module and the HTTP edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    // ledger
    DuplicateAccount,
    NotSufficientFunds,
    UnbalancedEntry,
    UnknownAccount,
    IdempotencyConflict,
    CurrencyMismatch,
    CorruptJournal,
    StorageFailure,
    // identity
    UnknownMsisdn,
    UnknownBankAccount,
    DuplicateRegistration,
    InvalidLogin,
    AccountLocked,
    AccountClosed,
    InvalidAnswer,
    ValidationFailed,
    ForbiddenFieldForChannel,
    ResidualBalanceNoBank,
    PasswordChangeRequired,
    Unauthorized,
    // transactions
    AmountInvalid,
    ProviderUnavailable,
    NoLinkedBankAccount,
    CodeExpired,
    CodeAlreadyRedeemed,
    CodeUnknown,
    HolderMismatch,
    AmountExceedsRemaining,
    // ussd
    WrongServiceCode,
    SessionExpired,
    InvalidSelection,
    // edge
    InvalidRequest,
    NotFound,
    Internal,
}

impl ErrorCode {
    pub const ALL: &'static [ErrorCode] = &[
        ErrorCode::DuplicateAccount,
        ErrorCode::NotSufficientFunds,
        ErrorCode::UnbalancedEntry,
        ErrorCode::UnknownAccount,
        ErrorCode::IdempotencyConflict,
        ErrorCode::CurrencyMismatch,
        ErrorCode::CorruptJournal,
        ErrorCode::StorageFailure,
        ErrorCode::UnknownMsisdn,
        ErrorCode::UnknownBankAccount,
        ErrorCode::DuplicateRegistration,
        ErrorCode::InvalidLogin,
        ErrorCode::AccountLocked,
        ErrorCode::AccountClosed,
        ErrorCode::InvalidAnswer,
        ErrorCode::ValidationFailed,
        ErrorCode::ForbiddenFieldForChannel,
        ErrorCode::ResidualBalanceNoBank,
        ErrorCode::PasswordChangeRequired,
        ErrorCode::Unauthorized,
        ErrorCode::AmountInvalid,
        ErrorCode::ProviderUnavailable,
        ErrorCode::NoLinkedBankAccount,
        ErrorCode::CodeExpired,
        ErrorCode::CodeAlreadyRedeemed,
        ErrorCode::CodeUnknown,
        ErrorCode::HolderMismatch,
        ErrorCode::AmountExceedsRemaining,
        ErrorCode::WrongServiceCode,
        ErrorCode::SessionExpired,
        ErrorCode::InvalidSelection,
        ErrorCode::InvalidRequest,
        ErrorCode::NotFound,
        ErrorCode::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::DuplicateAccount => "DUPLICATE_ACCOUNT",
            ErrorCode::NotSufficientFunds => "NOT_SUFFICIENT_FUNDS",
            ErrorCode::UnbalancedEntry => "UNBALANCED_ENTRY",
            ErrorCode::UnknownAccount => "UNKNOWN_ACCOUNT",
            ErrorCode::IdempotencyConflict => "IDEMPOTENCY_CONFLICT",
            ErrorCode::CurrencyMismatch => "CURRENCY_MISMATCH",
            ErrorCode::CorruptJournal => "CORRUPT_JOURNAL",
            ErrorCode::StorageFailure => "STORAGE_FAILURE",
            ErrorCode::UnknownMsisdn => "UNKNOWN_MSISDN",
            ErrorCode::UnknownBankAccount => "UNKNOWN_BANK_ACCOUNT",
            ErrorCode::DuplicateRegistration => "DUPLICATE_REGISTRATION",
            ErrorCode::InvalidLogin => "INVALID_LOGIN",
            ErrorCode::AccountLocked => "ACCOUNT_LOCKED",
            ErrorCode::AccountClosed => "ACCOUNT_CLOSED",
            ErrorCode::InvalidAnswer => "INVALID_ANSWER",
            ErrorCode::ValidationFailed => "VALIDATION_FAILED",
            ErrorCode::ForbiddenFieldForChannel => "FORBIDDEN_FIELD_FOR_CHANNEL",
            ErrorCode::ResidualBalanceNoBank => "RESIDUAL_BALANCE_NO_BANK",
            ErrorCode::PasswordChangeRequired => "PASSWORD_CHANGE_REQUIRED",
            ErrorCode::Unauthorized => "UNAUTHORIZED",
            ErrorCode::AmountInvalid => "AMOUNT_INVALID",
            ErrorCode::ProviderUnavailable => "PROVIDER_UNAVAILABLE",
            ErrorCode::NoLinkedBankAccount => "NO_LINKED_BANK_ACCOUNT",
            ErrorCode::CodeExpired => "CODE_EXPIRED",
            ErrorCode::CodeAlreadyRedeemed => "CODE_ALREADY_REDEEMED",
            ErrorCode::CodeUnknown => "CODE_UNKNOWN",
            ErrorCode::HolderMismatch => "HOLDER_MISMATCH",
            ErrorCode::AmountExceedsRemaining => "AMOUNT_EXCEEDS_REMAINING",
            ErrorCode::WrongServiceCode => "WRONG_SERVICE_CODE",
            ErrorCode::SessionExpired => "SESSION_EXPIRED",
            ErrorCode::InvalidSelection => "INVALID_SELECTION",
            ErrorCode::InvalidRequest => "INVALID_REQUEST",
            ErrorCode::NotFound => "NOT_FOUND",
            ErrorCode::Internal => "INTERNAL",
        }
    }

    /// User-facing text. Where the service defines a fixed wording
    /// ("Invalid login details", "Not sufficient funds", "Invalid Answer")
    /// it is reproduced exactly.
    pub fn default_message(self) -> &'static str {
        match self {
            ErrorCode::DuplicateAccount => "Account already exists",
            ErrorCode::NotSufficientFunds => "Not sufficient funds",
            ErrorCode::UnbalancedEntry => "Journal entry does not balance",
            ErrorCode::UnknownAccount => "Unknown account",
            ErrorCode::IdempotencyConflict => "Idempotency key reused with a different request",
            ErrorCode::CurrencyMismatch => "Currency does not match this deployment",
            ErrorCode::CorruptJournal => "Journal is corrupt",
            ErrorCode::StorageFailure => "Journal write failed",
            ErrorCode::UnknownMsisdn => "Unknown cellphone number",
            ErrorCode::UnknownBankAccount => "Unknown bank account",
            ErrorCode::DuplicateRegistration => "Cellphone number is already registered",
            ErrorCode::InvalidLogin => "Invalid login details",
            ErrorCode::AccountLocked => "Your account is locked. Please contact support",
            ErrorCode::AccountClosed => "This eWallet account is closed",
            ErrorCode::InvalidAnswer => "Invalid Answer",
            ErrorCode::ValidationFailed => "Invalid details",
            ErrorCode::ForbiddenFieldForChannel => "Only Cellphone and Pin number can be changed from a cellphone",
            ErrorCode::ResidualBalanceNoBank => "Your eWallet still holds funds and no bank account is linked",
            ErrorCode::PasswordChangeRequired => "Please change your temporary password",
            ErrorCode::Unauthorized => "Not logged in",
            ErrorCode::AmountInvalid => "Invalid amount",
            ErrorCode::ProviderUnavailable => "Service provider unavailable. Please try again later",
            ErrorCode::NoLinkedBankAccount => "No bank account is linked to this eWallet",
            ErrorCode::CodeExpired => "Access code has expired",
            ErrorCode::CodeAlreadyRedeemed => "Access code has already been redeemed",
            ErrorCode::CodeUnknown => "Invalid access code",
            ErrorCode::HolderMismatch => "Access code was not issued to this cellphone number",
            ErrorCode::AmountExceedsRemaining => "Amount exceeds the remaining value of the access code",
            ErrorCode::WrongServiceCode => "Unknown service code",
            ErrorCode::SessionExpired => "Session expired. Please dial again",
            ErrorCode::InvalidSelection => "Invalid selection",
            ErrorCode::InvalidRequest => "Invalid request",
            ErrorCode::NotFound => "Not found",
            ErrorCode::Internal => "Internal error",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A field-level validation failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldReason {
    pub field: String,
    pub reason: String,
}

impl FieldReason {
    pub fn new(field: &str, reason: &str) -> Self {
        Self {
            field: field.to_string(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct Error {
    pub code: ErrorCode,
    pub message: String,
    pub reasons: Vec<FieldReason>,
}

impl Error {
    pub fn new(code: ErrorCode) -> Self {
        Self {
            code,
            message: code.default_message().to_string(),
            reasons: Vec::new(),
        }
    }

    pub fn with_message(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            reasons: Vec::new(),
        }
    }

    pub fn validation(reasons: Vec<FieldReason>) -> Self {
        let mut message = String::from(ErrorCode::ValidationFailed.default_message());
        for (i, r) in reasons.iter().enumerate() {
            message.push_str(if i == 0 { ": " } else { "; " });
            message.push_str(&r.field);
            message.push(' ');
            message.push_str(&r.reason);
        }
        Self {
            code: ErrorCode::ValidationFailed,
            message,
            reasons,
        }
    }
}

impl From<ErrorCode> for Error {
    fn from(code: ErrorCode) -> Self {
        Error::new(code)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn user_facing_wording_is_exact() {
        assert_eq!(ErrorCode::InvalidLogin.default_message(), "Invalid login details");
        assert_eq!(ErrorCode::NotSufficientFunds.default_message(), "Not sufficient funds");
        assert_eq!(ErrorCode::InvalidAnswer.default_message(), "Invalid Answer");
    }

    #[test]
    fn code_strings_match_serde() {
        for code in ErrorCode::ALL {
            let quoted = alloc::format!("{:?}", code.as_str());
            // serde renames to the same SCREAMING_SNAKE_CASE text
            assert!(quoted.len() > 2);
            assert!(code.as_str().chars().all(|c| c.is_ascii_uppercase() || c == '_'));
        }
    }

    #[test]
    fn validation_message_lists_reasons() {
        let e = Error::validation(alloc::vec![FieldReason::new("pin", "must be 4 to 6 digits")]);
        assert_eq!(e.code, ErrorCode::ValidationFailed);
        assert_eq!(e.message, "Invalid details: pin must be 4 to 6 digits");
    }
}
