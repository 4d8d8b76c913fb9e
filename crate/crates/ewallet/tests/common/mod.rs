#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use axum::Router;
use ewallet::config::{Config, Fsync};
use ewallet::service::Service;
use ewallet_core::time::{Clock, ManualClock};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

pub const KAYEMBE: &str = "27820000001";
pub const WIFE: &str = "27820000002";
pub const MOTHER: &str = "27830000003";
pub const FATHER: &str = "27840000004";
pub const SELLER: &str = "27820000005";
pub const BROTHER: &str = "243810000006";
pub const KAYEMBE_BANK: &str = "1002003004";
pub const STORE_BANK: &str = "2003004005";
pub const BANK_SEED: i64 = 1_500_000;
pub const NEW_PASSWORD: &str = "Kasai2024";

pub fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/kayembe.json")
}

pub struct Harness {
    pub svc: Arc<Service>,
    pub router: Router,
    pub clock: ManualClock,
    pub dir: TempDir,
    pub config: Config,
}

pub struct Reply {
    pub status: u16,
    pub text: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or_else(|e| panic!("{e}: {}", self.text))
    }

    pub fn code(&self) -> String {
        self.json()["code"].as_str().unwrap_or_default().to_string()
    }
}

impl Harness {
    pub fn new() -> Self {
        Self::with(|_| {})
    }

    pub fn with(f: impl FnOnce(&mut Config)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut config = Config {
            journal: dir.path().join("ewallet.journal"),
            seed: Some(fixture_path()),
            fsync: Fsync::Never,
            ..Config::default()
        };
        f(&mut config);
        config.validate().unwrap();
        let clock = ManualClock::at_default_epoch();
        Self::open(config, clock, dir)
    }

    fn open(config: Config, clock: ManualClock, dir: TempDir) -> Self {
        let svc = Arc::new(Service::open(config.clone(), Arc::new(clock.clone()), Some(7)).unwrap());
        let router = ewallet::http::router(svc.clone());
        Self {
            svc,
            router,
            clock,
            dir,
            config,
        }
    }

    /// Drops the running service and starts a new one from the same journal.
    pub fn restart(self) -> Self {
        let Harness {
            svc,
            router,
            clock,
            dir,
            config,
        } = self;
        drop(router);
        drop(svc);
        Self::open(config, clock, dir)
    }

    pub fn journal(&self) -> PathBuf {
        self.config.journal.clone()
    }

    pub async fn call(
        &self,
        method: &str,
        path: &str,
        token: Option<&str>,
        key: Option<&str>,
        body: Option<Value>,
    ) -> Reply {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        if let Some(k) = key {
            req = req.header("idempotency-key", k);
        }
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(b.to_string()))
                .unwrap(),
            None => req.body(Body::empty()).unwrap(),
        };
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status().as_u16();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        Reply {
            status,
            text: String::from_utf8(bytes.to_vec()).unwrap(),
        }
    }

    pub async fn get(&self, path: &str, token: Option<&str>) -> Reply {
        self.call("GET", path, token, None, None).await
    }

    pub async fn post(&self, path: &str, token: Option<&str>, body: Value) -> Reply {
        self.call("POST", path, token, None, Some(body)).await
    }

    pub async fn ok(&self, path: &str, token: Option<&str>, body: Value) -> Value {
        let r = self.post(path, token, body).await;
        assert_eq!(r.status, 200, "{path}: {}", r.text);
        r.json()
    }

    pub async fn sms(&self, msisdn: &str) -> Vec<String> {
        let r = self.get(&format!("/sms/outbox/{msisdn}"), None).await;
        assert_eq!(r.status, 200, "{}", r.text);
        r.json()["messages"]
            .as_array()
            .unwrap()
            .iter()
            .map(|m| m["body"].as_str().unwrap().to_string())
            .collect()
    }

    pub async fn last_sms(&self, msisdn: &str) -> String {
        self.sms(msisdn).await.pop().unwrap_or_default()
    }

    /// Registers and returns the temporary password from the welcome SMS.
    pub async fn register(&self, msisdn: &str, bank: Option<&str>) -> String {
        self.ok(
            "/register",
            None,
            json!({
                "msisdn": msisdn, "full_name": format!("Holder {msisdn}"), "pin": "1234",
                "secret_question": "Home town?", "secret_answer": "Kananga", "bank_account": bank,
            }),
        )
        .await;
        let sms = self.last_sms(msisdn).await;
        sms.split("temporary password is ")
            .nth(1)
            .unwrap()
            .split('.')
            .next()
            .unwrap()
            .to_string()
    }

    /// Registers, logs in on the web and replaces the temporary password.
    pub async fn member(&self, msisdn: &str, bank: Option<&str>) -> String {
        let pw = self.register(msisdn, bank).await;
        let login = self
            .ok(
                "/login",
                None,
                json!({"channel": "WEB", "login_id": msisdn, "password": pw}),
            )
            .await;
        let token = login["token"].as_str().unwrap().to_string();
        self.ok(
            "/password/change",
            Some(&token),
            json!({"current_password": pw, "new_password": NEW_PASSWORD}),
        )
        .await;
        token
    }

    pub async fn ussd(&self, session: &str, msisdn: &str, inputs: &[&str]) -> Vec<Value> {
        let mut out = Vec::new();
        for i in std::iter::once(&"#555*").chain(inputs) {
            let r = self
                .post(
                    "/ussd",
                    None,
                    json!({"session_id": session, "msisdn": msisdn, "input": i}),
                )
                .await;
            assert_eq!(r.status, 200, "{}", r.text);
            out.push(r.json());
        }
        out
    }

    pub fn wallet(&self, msisdn: &str) -> i64 {
        self.svc.lock().engine.wallet_balance(msisdn)
    }

    pub fn balances(&self) -> BTreeMap<String, i64> {
        let st = self.svc.lock();
        st.engine
            .ledger()
            .accounts()
            .map(|(id, m)| (id.to_string(), m.amount_minor))
            .collect()
    }

    pub fn entries(&self) -> u64 {
        self.svc.lock().engine.ledger().last_seq()
    }

    pub fn now(&self) -> ewallet_core::time::Timestamp {
        self.clock.now()
    }
}

/// Balances recomputed from the journal file's raw JSON, sharing no code
/// with the ledger.
pub fn fold_journal(path: &Path) -> BTreeMap<String, i64> {
    let mut out = BTreeMap::new();
    let text = std::fs::read_to_string(path).unwrap_or_default();
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        if v["meta"]["event"] == "open_account" {
            out.entry(v["meta"]["account"].as_str().unwrap().to_string())
                .or_insert(0);
        }
        for p in v["postings"].as_array().unwrap() {
            *out.entry(p["account"].as_str().unwrap().to_string()).or_insert(0) += p["delta_minor"].as_i64().unwrap();
        }
    }
    out
}

/// The live balances must equal the file fold.
pub fn assert_replay_oracle(h: &Harness) {
    let fold = fold_journal(&h.journal());
    let live = h.balances();
    for (acct, bal) in &live {
        assert_eq!(fold.get(acct).copied().unwrap_or(0), *bal, "{acct}");
    }
    for (acct, bal) in &fold {
        assert_eq!(live.get(acct).copied().unwrap_or(0), *bal, "{acct}");
    }
    assert_eq!(live.values().map(|b| i128::from(*b)).sum::<i128>(), 0);
}

pub fn first_code(body: &str) -> Option<String> {
    body.split(|c: char| !c.is_ascii_digit())
        .find(|w| w.len() == 8)
        .map(String::from)
}
