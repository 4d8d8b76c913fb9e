//! HTTP/JSON gateway over the service.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State as AxState};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ewallet_core::engine::{Application, CodeTarget, Delivery, FundingSource, MerchantFunding};
use ewallet_core::identity::{Channel, DetailChanges, Status};
use ewallet_core::providers::{Bank, FaultPlan, SeedFixture, Sms, SmsMessage};
use ewallet_core::time::Timestamp;
use ewallet_core::{msisdn, Error, ErrorCode, FieldReason, JournalEntry, Money};
use serde::{Deserialize, Serialize};

use crate::audit;
use crate::service::{Service, State};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
pub const ADMIN_HEADER: &str = "x-admin-token";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub http_status: u16,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reasons: Vec<FieldReason>,
}

/// The status every error code is reported with.
pub fn http_status(code: ErrorCode) -> u16 {
    use ErrorCode::*;
    match code {
        ValidationFailed | AmountInvalid | InvalidRequest | InvalidSelection | WrongServiceCode | UnbalancedEntry
        | CurrencyMismatch => 400,
        InvalidLogin | Unauthorized | InvalidAnswer => 401,
        ForbiddenFieldForChannel | PasswordChangeRequired | HolderMismatch => 403,
        UnknownMsisdn | UnknownBankAccount | UnknownAccount | CodeUnknown | NotFound => 404,
        IdempotencyConflict
        | DuplicateAccount
        | DuplicateRegistration
        | CodeAlreadyRedeemed
        | ResidualBalanceNoBank => 409,
        CodeExpired | SessionExpired | AccountClosed => 410,
        NotSufficientFunds | AmountExceedsRemaining | NoLinkedBankAccount => 422,
        AccountLocked => 423,
        CorruptJournal | StorageFailure | Internal => 500,
        ProviderUnavailable => 503,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self {
            code: e.code,
            message: e.message,
            http_status: http_status(e.code),
            reasons: e.reasons,
        }
    }
}

impl From<ErrorCode> for ApiError {
    fn from(code: ErrorCode) -> Self {
        Error::new(code).into()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Error::with_message(ErrorCode::InvalidRequest, r.body_text()).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type Shared = Arc<Service>;
type ApiResult<T> = Result<Json<T>, ApiError>;
type Body<T> = Result<Json<T>, JsonRejection>;

fn body<T>(b: Body<T>) -> Result<T, ApiError> {
    b.map(|Json(t)| t).map_err(ApiError::from)
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get("authorization")?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

fn request_key(svc: &Service, state: &mut State, headers: &HeaderMap) -> Result<String, ApiError> {
    match headers.get(IDEMPOTENCY_HEADER) {
        None => Ok(svc.new_request_key(state)),
        Some(v) => match v.to_str() {
            Ok(k) if !k.trim().is_empty() && k.len() <= 128 => Ok(k.trim().to_string()),
            _ => Err(Error::with_message(ErrorCode::InvalidRequest, "bad Idempotency-Key header").into()),
        },
    }
}

fn check_currency(state: &State, currency: &Option<String>) -> Result<(), ApiError> {
    match currency {
        Some(c) if c != state.engine.config().currency.as_str() => Err(ErrorCode::CurrencyMismatch.into()),
        _ => Ok(()),
    }
}

fn same_number(a: &str, b: &str) -> bool {
    msisdn::normalize(a).is_some_and(|a| msisdn::normalize(b).is_some_and(|b| a == b))
}

fn require_admin(svc: &Service, headers: &HeaderMap) -> Result<(), ApiError> {
    match &svc.config().admin_token {
        None => Ok(()),
        Some(t) if headers.get(ADMIN_HEADER).and_then(|v| v.to_str().ok()) == Some(t.as_str()) => Ok(()),
        Some(_) => Err(ErrorCode::Unauthorized.into()),
    }
}

pub fn router(svc: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/ussd", post(ussd))
        .route("/register", post(register))
        .route("/login", post(login))
        .route("/password/change", post(change_password))
        .route("/pin/question/{msisdn}", get(pin_question))
        .route("/pin/retrieve", post(pin_retrieve))
        .route("/details/update", post(update_details))
        .route("/deregister", post(deregister))
        .route("/wallets/{msisdn}/balance", get(balance))
        .route("/wallets/{msisdn}/statement", get(statement))
        .route("/transfers/wallet", post(transfer_wallet))
        .route("/transfers/bank", post(transfer_bank))
        .route("/transfers/bank-to-bank", post(transfer_bank_to_bank))
        .route("/transfers/code", post(transfer_code))
        .route("/recharge", post(recharge))
        .route("/withdrawals", post(withdraw))
        .route("/atm/redeem", post(atm_redeem))
        .route("/pos/charge", post(pos_charge))
        .route("/sms/outbox/{msisdn}", get(outbox))
        .route("/sms/outbox/{msisdn}/ack", post(outbox_ack))
        .route("/admin/seed", post(admin_seed))
        .route("/admin/unlock", post(admin_unlock))
        .route("/admin/expire", post(admin_expire))
        .route("/admin/faults", post(admin_faults))
        .route("/admin/journal", get(admin_journal))
        .route("/admin/balances", get(admin_balances))
        .route("/admin/audit", get(admin_audit))
        .route("/admin/statement/{msisdn}", get(admin_statement))
        .fallback(|| async { ApiError::from(ErrorCode::NotFound) })
        .with_state(svc)
}

/// Serves until the listener fails, sweeping expired codes and sessions
/// in the background.
pub async fn serve(svc: Shared, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    serve_until(svc, listener, std::future::pending()).await
}

/// As [`serve`], returning once `shutdown` resolves and in-flight
/// requests finish.
pub async fn serve_until(
    svc: Shared,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let sweeper = svc.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(30));
        loop {
            tick.tick().await;
            sweeper.sweep();
        }
    });
    axum::serve(listener, router(svc))
        .with_graceful_shutdown(shutdown)
        .await
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    entries: u64,
    bank_available: bool,
}

async fn health(AxState(svc): AxState<Shared>) -> Json<Health> {
    let st = svc.lock();
    Json(Health {
        status: "ok",
        entries: st.engine.ledger().last_seq(),
        bank_available: st.engine.providers().bank.health(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UssdRequest {
    pub session_id: String,
    pub msisdn: String,
    pub input: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UssdResponse {
    pub text: String,
    pub end_session: bool,
}

async fn ussd(AxState(svc): AxState<Shared>, req: Body<UssdRequest>) -> ApiResult<UssdResponse> {
    let req = body(req)?;
    let now = svc.now();
    let mut guard = svc.lock();
    let st = &mut *guard;
    st.ussd.expire_sessions(now);
    let screen = match st.ussd.session(&req.session_id) {
        Some(s) if !same_number(&s.msisdn, &req.msisdn) => return Err(ErrorCode::Unauthorized.into()),
        Some(_) => st.ussd.step(&mut st.engine, &req.session_id, &req.input)?,
        None => st
            .ussd
            .begin_session(&mut st.engine, &req.session_id, &req.msisdn, &req.input)?,
    };
    svc.snapshot(st);
    Ok(Json(UssdResponse {
        text: screen.text,
        end_session: screen.terminal,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub msisdn: String,
    pub login_id: String,
    pub claimed_minor: i64,
    pub message: String,
}

async fn register(AxState(svc): AxState<Shared>, req: Body<Application>) -> ApiResult<RegisterResponse> {
    let app = body(req)?;
    let mut st = svc.lock();
    let receipt = st.engine.register(&app)?;
    svc.snapshot(&st);
    Ok(Json(RegisterResponse {
        msisdn: receipt.msisdn,
        login_id: receipt.login_id,
        claimed_minor: receipt.claimed_minor,
        message: "Your Login ID and temporary password were sent by SMS".into(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoginRequest {
    pub channel: Channel,
    #[serde(default)]
    pub login_id: Option<String>,
    #[serde(default)]
    pub msisdn: Option<String>,
    #[serde(default)]
    pub password: Option<String>,
    #[serde(default)]
    pub pin: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub msisdn: String,
    pub channel: Channel,
    pub must_change_password: bool,
    pub expires_at: Timestamp,
}

async fn login(AxState(svc): AxState<Shared>, req: Body<LoginRequest>) -> ApiResult<LoginResponse> {
    let req = body(req)?;
    let missing = |f: &str| ApiError::from(Error::validation(vec![FieldReason::new(f, "is required")]));
    let (principal, secret) = match req.channel {
        Channel::Ussd => (
            req.msisdn.ok_or_else(|| missing("msisdn"))?,
            req.pin.ok_or_else(|| missing("pin"))?,
        ),
        Channel::Web => (
            req.login_id.or(req.msisdn).ok_or_else(|| missing("login_id"))?,
            req.password.ok_or_else(|| missing("password"))?,
        ),
    };
    let mut guard = svc.lock();
    let st = &mut *guard;
    let result = st.engine.login(req.channel, &principal, &secret);
    svc.snapshot(st);
    let grant = result?;
    let (token, expires_at) = svc.issue_token(st, &grant.msisdn, grant.channel, grant.must_change_password);
    Ok(Json(LoginResponse {
        token,
        msisdn: grant.msisdn,
        channel: grant.channel,
        must_change_password: grant.must_change_password,
        expires_at,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Done {
    pub status: &'static str,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ChangePassword {
    pub current_password: String,
    pub new_password: String,
}

async fn change_password(
    AxState(svc): AxState<Shared>,
    headers: HeaderMap,
    req: Body<ChangePassword>,
) -> ApiResult<Done> {
    let req = body(req)?;
    let mut guard = svc.lock();
    let st = &mut *guard;
    let session = svc.authorize(st, bearer(&headers), true)?;
    st.engine
        .change_password(&session.msisdn, &req.current_password, &req.new_password)?;
    if let Some(t) = bearer(&headers) {
        svc.password_changed(st, t);
    }
    svc.snapshot(st);
    Ok(Json(Done { status: "ok" }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Question {
    pub msisdn: String,
    pub question: String,
}

async fn pin_question(AxState(svc): AxState<Shared>, Path(m): Path<String>) -> ApiResult<Question> {
    let st = svc.lock();
    let question = st.engine.secret_question(&m)?;
    Ok(Json(Question { msisdn: m, question }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PinRetrieve {
    pub msisdn: String,
    pub answer: String,
}

async fn pin_retrieve(
    AxState(svc): AxState<Shared>,
    req: Body<PinRetrieve>,
) -> ApiResult<ewallet_core::engine::PinRetrieval> {
    let req = body(req)?;
    let mut st = svc.lock();
    let result = st.engine.retrieve_pin(&req.msisdn, &req.answer);
    svc.snapshot(&st);
    Ok(Json(result?))
}

async fn update_details(
    AxState(svc): AxState<Shared>,
    headers: HeaderMap,
    req: Body<DetailChanges>,
) -> ApiResult<ewallet_core::engine::DetailsOutcome> {
    let changes = body(req)?;
    let mut guard = svc.lock();
    let st = &mut *guard;
    let session = svc.authorize(st, bearer(&headers), false)?;
    let outcome = st.engine.update_details(session.channel, &session.msisdn, &changes)?;
    if outcome.msisdn != session.msisdn {
        svc.move_tokens(st, &session.msisdn, &outcome.msisdn);
    }
    svc.snapshot(st);
    Ok(Json(outcome))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Deregister {
    #[serde(default)]
    pub confirm: bool,
}

async fn deregister(
    AxState(svc): AxState<Shared>,
    headers: HeaderMap,
    req: Body<Deregister>,
) -> ApiResult<ewallet_core::engine::DeregistrationOutcome> {
    let req = body(req)?;
    let mut guard = svc.lock();
    let st = &mut *guard;
    let session = svc.authorize(st, bearer(&headers), false)?;
    let outcome = st.engine.deregister(&session.msisdn, req.confirm)?;
    if outcome.status == Status::Closed {
        svc.revoke_tokens(st, &session.msisdn);
    }
    svc.snapshot(st);
    Ok(Json(outcome))
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct BalanceQuery {
    #[serde(default)]
    pub delivery: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BalanceResponse {
    pub msisdn: String,
    pub balance: Money,
}

async fn balance(
    AxState(svc): AxState<Shared>,
    headers: HeaderMap,
    Path(m): Path<String>,
    Query(q): Query<BalanceQuery>,
) -> ApiResult<BalanceResponse> {
    let delivery = match q.delivery.as_deref() {
        None | Some("display") => Delivery::Display,
        Some("sms") => Delivery::Sms,
        Some(_) => {
            return Err(Error::with_message(ErrorCode::InvalidRequest, "delivery must be display or sms").into())
        }
    };
    let mut st = svc.lock();
    let session = svc.authorize(&st, bearer(&headers), false)?;
    if !same_number(&session.msisdn, &m) {
        return Err(ErrorCode::Unauthorized.into());
    }
    let balance = st.engine.check_balance(&session.msisdn, delivery)?;
    Ok(Json(BalanceResponse {
        msisdn: session.msisdn,
        balance,
    }))
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct SeqRange {
    #[serde(default)]
    pub from_seq: Option<u64>,
    #[serde(default)]
    pub to_seq: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatementResponse {
    pub msisdn: String,
    pub entries: Vec<JournalEntry>,
}

async fn statement(
    AxState(svc): AxState<Shared>,
    headers: HeaderMap,
    Path(m): Path<String>,
    Query(q): Query<SeqRange>,
) -> ApiResult<StatementResponse> {
    let st = svc.lock();
    let session = svc.authorize(&st, bearer(&headers), false)?;
    if !same_number(&session.msisdn, &m) {
        return Err(ErrorCode::Unauthorized.into());
    }
    let entries = st.engine.statement(
        &session.msisdn,
        q.from_seq.unwrap_or(1),
        q.to_seq.unwrap_or(u64::MAX),
        false,
    )?;
    Ok(Json(StatementResponse {
        msisdn: session.msisdn,
        entries,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WalletTransfer {
    pub recipient_msisdn: String,
    pub amount_minor: i64,
    #[serde(default)]
    pub source: FundingSource,
    #[serde(default)]
    pub currency: Option<String>,
}

/// Locks, authenticates the bearer and resolves the idempotency key, then
/// hands the sender to `op`.
fn money_call<T>(
    svc: &Service,
    headers: &HeaderMap,
    currency: &Option<String>,
    op: impl FnOnce(&mut State, &str, &str) -> ewallet_core::Result<T>,
) -> ApiResult<T> {
    let mut guard = svc.lock();
    let st = &mut *guard;
    let session = svc.authorize(st, bearer(headers), false)?;
    check_currency(st, currency)?;
    let key = request_key(svc, st, headers)?;
    Ok(Json(op(st, &session.msisdn, &key)?))
}

async fn transfer_wallet(
    AxState(svc): AxState<Shared>,
    headers: HeaderMap,
    req: Body<WalletTransfer>,
) -> ApiResult<ewallet_core::engine::Transaction> {
    let req = body(req)?;
    money_call(&svc, &headers, &req.currency, |st, sender, key| {
        st.engine
            .transfer_wallet_to_wallet(sender, &req.recipient_msisdn, req.amount_minor, req.source, key)
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BankTransfer {
    pub bank_account: String,
    pub amount_minor: i64,
    #[serde(default)]
    pub currency: Option<String>,
}

async fn transfer_bank(
    AxState(svc): AxState<Shared>,
    headers: HeaderMap,
    req: Body<BankTransfer>,
) -> ApiResult<ewallet_core::engine::Transaction> {
    let req = body(req)?;
    money_call(&svc, &headers, &req.currency, |st, sender, key| {
        st.engine
            .transfer_wallet_to_bank(sender, &req.bank_account, req.amount_minor, key)
    })
}

async fn transfer_bank_to_bank(
    AxState(svc): AxState<Shared>,
    headers: HeaderMap,
    req: Body<BankTransfer>,
) -> ApiResult<ewallet_core::engine::Transaction> {
    let req = body(req)?;
    money_call(&svc, &headers, &req.currency, |st, sender, key| {
        st.engine
            .transfer_bank_to_bank(sender, &req.bank_account, req.amount_minor, key)
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AmountOnly {
    pub amount_minor: i64,
    #[serde(default)]
    pub currency: Option<String>,
}

async fn recharge(
    AxState(svc): AxState<Shared>,
    headers: HeaderMap,
    req: Body<AmountOnly>,
) -> ApiResult<ewallet_core::engine::Transaction> {
    let req = body(req)?;
    money_call(&svc, &headers, &req.currency, |st, sender, key| {
        st.engine.recharge(sender, req.amount_minor, key)
    })
}

async fn withdraw(
    AxState(svc): AxState<Shared>,
    headers: HeaderMap,
    req: Body<AmountOnly>,
) -> ApiResult<ewallet_core::engine::WithdrawalReceipt> {
    let req = body(req)?;
    money_call(&svc, &headers, &req.currency, |st, sender, key| {
        st.engine.request_withdrawal(sender, req.amount_minor, key)
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AtmRedeem {
    pub code: String,
    pub msisdn: String,
    pub amount_minor: i64,
    #[serde(default)]
    pub currency: Option<String>,
}

/// The code and the holder's number are the credentials here.
async fn atm_redeem(
    AxState(svc): AxState<Shared>,
    headers: HeaderMap,
    req: Body<AtmRedeem>,
) -> ApiResult<ewallet_core::engine::RedemptionReceipt> {
    let req = body(req)?;
    let mut guard = svc.lock();
    let st = &mut *guard;
    check_currency(st, &req.currency)?;
    let key = request_key(&svc, st, &headers)?;
    Ok(Json(st.engine.redeem_at_atm(
        &req.code,
        &req.msisdn,
        req.amount_minor,
        &key,
    )?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PosCharge {
    pub buyer_msisdn: String,
    pub seller_msisdn: String,
    pub amount_minor: i64,
    /// Code-funded when present; otherwise the buyer's bearer token must
    /// authorize a wallet debit.
    #[serde(default)]
    pub code: Option<String>,
    #[serde(default)]
    pub currency: Option<String>,
}

async fn pos_charge(
    AxState(svc): AxState<Shared>,
    headers: HeaderMap,
    req: Body<PosCharge>,
) -> ApiResult<ewallet_core::engine::Transaction> {
    let req = body(req)?;
    let mut guard = svc.lock();
    let st = &mut *guard;
    check_currency(st, &req.currency)?;
    let funding = match &req.code {
        Some(c) => MerchantFunding::Code(c.clone()),
        None => {
            let session = svc.authorize(st, bearer(&headers), false)?;
            if !same_number(&session.msisdn, &req.buyer_msisdn) {
                return Err(ErrorCode::Unauthorized.into());
            }
            MerchantFunding::Wallet
        }
    };
    let key = request_key(&svc, st, &headers)?;
    Ok(Json(st.engine.pay_merchant(
        &req.buyer_msisdn,
        &req.seller_msisdn,
        req.amount_minor,
        &funding,
        &key,
    )?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CodeTransfer {
    pub holder_msisdn: String,
    pub code: String,
    pub target: CodeTarget,
}

async fn transfer_code(
    AxState(svc): AxState<Shared>,
    headers: HeaderMap,
    req: Body<CodeTransfer>,
) -> ApiResult<ewallet_core::engine::Transaction> {
    let req = body(req)?;
    let mut guard = svc.lock();
    let st = &mut *guard;
    let key = request_key(&svc, st, &headers)?;
    Ok(Json(st.engine.transfer_from_code(
        &req.holder_msisdn,
        &req.code,
        &req.target,
        &key,
    )?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Outbox {
    pub msisdn: String,
    pub messages: Vec<SmsMessage>,
}

async fn outbox(AxState(svc): AxState<Shared>, Path(m): Path<String>) -> ApiResult<Outbox> {
    let m = msisdn::normalize(&m).ok_or(ErrorCode::UnknownMsisdn)?;
    let st = svc.lock();
    let messages = st.engine.providers().sms.outbox(&m);
    Ok(Json(Outbox { msisdn: m, messages }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Ack {
    pub ids: Vec<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Acked {
    pub delivered: usize,
}

async fn outbox_ack(AxState(svc): AxState<Shared>, Path(m): Path<String>, req: Body<Ack>) -> ApiResult<Acked> {
    let req = body(req)?;
    let m = msisdn::normalize(&m).ok_or(ErrorCode::UnknownMsisdn)?;
    let mut st = svc.lock();
    let delivered = st.engine.providers_mut().sms.ack(&m, &req.ids);
    Ok(Json(Acked { delivered }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Seeded {
    pub provisioned: usize,
}

async fn admin_seed(AxState(svc): AxState<Shared>, headers: HeaderMap, req: Body<SeedFixture>) -> ApiResult<Seeded> {
    require_admin(&svc, &headers)?;
    let fixture = body(req)?;
    let mut st = svc.lock();
    Ok(Json(Seeded {
        provisioned: st.engine.seed(&fixture)?,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UnlockRequest {
    pub msisdn: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UnlockResponse {
    pub msisdn: String,
    pub outcome: ewallet_core::engine::UnlockOutcome,
    pub message: String,
}

async fn admin_unlock(
    AxState(svc): AxState<Shared>,
    headers: HeaderMap,
    req: Body<UnlockRequest>,
) -> ApiResult<UnlockResponse> {
    require_admin(&svc, &headers)?;
    let req = body(req)?;
    let mut st = svc.lock();
    let outcome = st.engine.unlock(&req.msisdn)?;
    svc.snapshot(&st);
    let message = match outcome {
        ewallet_core::engine::UnlockOutcome::Unlocked => format!("{} unlocked", req.msisdn),
        ewallet_core::engine::UnlockOutcome::AlreadyActive => {
            format!("{} is already active; nothing to do", req.msisdn)
        }
    };
    Ok(Json(UnlockResponse {
        msisdn: req.msisdn,
        outcome,
        message,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Expired {
    pub codes_expired: usize,
    pub sessions_ended: usize,
}

async fn admin_expire(AxState(svc): AxState<Shared>, headers: HeaderMap) -> ApiResult<Expired> {
    require_admin(&svc, &headers)?;
    let (codes_expired, sessions_ended) = svc.sweep();
    Ok(Json(Expired {
        codes_expired,
        sessions_ended,
    }))
}

async fn admin_faults(AxState(svc): AxState<Shared>, headers: HeaderMap, req: Body<FaultPlan>) -> ApiResult<FaultPlan> {
    require_admin(&svc, &headers)?;
    let plan = body(req)?;
    let mut st = svc.lock();
    st.engine.providers_mut().bank.arm_faults(plan);
    Ok(Json(st.engine.providers().bank.faults()))
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct JournalQuery {
    #[serde(default)]
    pub from_seq: Option<u64>,
    #[serde(default)]
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JournalPage {
    pub last_seq: u64,
    pub entries: Vec<JournalEntry>,
}

async fn admin_journal(
    AxState(svc): AxState<Shared>,
    headers: HeaderMap,
    Query(q): Query<JournalQuery>,
) -> ApiResult<JournalPage> {
    require_admin(&svc, &headers)?;
    let st = svc.lock();
    let from = q.from_seq.unwrap_or(1);
    let entries = st
        .engine
        .ledger()
        .entries()
        .iter()
        .filter(|e| e.seq >= from)
        .take(q.limit.unwrap_or(usize::MAX))
        .cloned()
        .collect();
    Ok(Json(JournalPage {
        last_seq: st.engine.ledger().last_seq(),
        entries,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AccountBalance {
    pub account: String,
    pub balance_minor: i64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Balances {
    pub accounts: Vec<AccountBalance>,
    pub total_minor: i64,
    pub live_codes_minor: i64,
}

async fn admin_balances(AxState(svc): AxState<Shared>, headers: HeaderMap) -> ApiResult<Balances> {
    require_admin(&svc, &headers)?;
    let st = svc.lock();
    let ledger = st.engine.ledger();
    Ok(Json(Balances {
        accounts: ledger
            .accounts()
            .map(|(id, m)| AccountBalance {
                account: id.to_string(),
                balance_minor: m.amount_minor,
            })
            .collect(),
        total_minor: i64::try_from(ledger.total()).unwrap_or(i64::MAX),
        live_codes_minor: st.engine.codes().live_total(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AuditResponse {
    pub ok: bool,
    pub detail: String,
}

async fn admin_audit(AxState(svc): AxState<Shared>, headers: HeaderMap) -> ApiResult<AuditResponse> {
    require_admin(&svc, &headers)?;
    let st = svc.lock();
    Ok(Json(match audit::audit(&st.engine) {
        Ok(r) => AuditResponse {
            ok: true,
            detail: r.to_string(),
        },
        Err(detail) => AuditResponse { ok: false, detail },
    }))
}

async fn admin_statement(
    AxState(svc): AxState<Shared>,
    headers: HeaderMap,
    Path(m): Path<String>,
    Query(q): Query<SeqRange>,
) -> ApiResult<StatementResponse> {
    require_admin(&svc, &headers)?;
    let st = svc.lock();
    let entries = st
        .engine
        .statement(&m, q.from_seq.unwrap_or(1), q.to_seq.unwrap_or(u64::MAX), true)?;
    Ok(Json(StatementResponse { msisdn: m, entries }))
}
