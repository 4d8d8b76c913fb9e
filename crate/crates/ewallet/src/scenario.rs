//! The Kayembe family walkthrough, driven over HTTP against a live service.

use std::io::Write;
use std::sync::Arc;

use ewallet_core::providers::SeedFixture;
use reqwest::blocking::Client;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::config::Config;
use crate::http::ADMIN_HEADER;
use crate::providers::SystemClock;
use crate::service::Service;

pub const FIXTURE: &str = include_str!("../fixtures/kayembe.json");

pub const KAYEMBE: &str = "27820000001";
pub const WIFE: &str = "27820000002";
pub const MOTHER: &str = "27830000003";
pub const FATHER: &str = "27840000004";
pub const SELLER: &str = "27820000005";
pub const KAYEMBE_BANK: &str = "1002003004";

pub fn fixture() -> SeedFixture {
    serde_json::from_str(FIXTURE).expect("bundled fixture parses")
}

/// A service on an ephemeral port with a throwaway journal. Lives until
/// the process exits; the returned directory must be kept alive.
pub fn self_host(mut config: Config) -> Result<(String, tempfile::TempDir), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    config.journal = dir.path().join("scenario.journal");
    config.seed = None;
    let svc = Arc::new(Service::open(config, Arc::new(SystemClock), None).map_err(|e| e.to_string())?);
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = match tokio::runtime::Runtime::new() {
            Ok(rt) => rt,
            Err(e) => return drop(tx.send(Err(e.to_string()))),
        };
        rt.block_on(async move {
            let listener = match tokio::net::TcpListener::bind("127.0.0.1:0").await {
                Ok(l) => l,
                Err(e) => return drop(tx.send(Err(e.to_string()))),
            };
            let addr = listener.local_addr().map(|a| a.to_string()).map_err(|e| e.to_string());
            let _ = tx.send(addr);
            let _ = crate::http::serve(svc, listener).await;
        });
    });
    let addr = rx.recv().map_err(|e| e.to_string())??;
    Ok((format!("http://{addr}"), dir))
}

struct Driver<'a, W: Write> {
    http: Client,
    base: String,
    admin: Option<String>,
    out: &'a mut W,
}

fn first_code(body: &str) -> Option<String> {
    body.split(|c: char| !c.is_ascii_digit())
        .find(|w| w.len() == ewallet_core::engine::CODE_LEN)
        .map(String::from)
}

impl<W: Write> Driver<'_, W> {
    fn say(&mut self, line: impl AsRef<str>) {
        let _ = writeln!(self.out, "{}", line.as_ref());
    }

    fn call<T: DeserializeOwned>(
        &mut self,
        method: &str,
        path: &str,
        token: Option<&str>,
        body: Option<Value>,
    ) -> Result<T, String> {
        let url = format!("{}{path}", self.base);
        let mut req = match method {
            "GET" => self.http.get(&url),
            _ => self.http.post(&url),
        };
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        if let Some(a) = &self.admin {
            req = req.header(ADMIN_HEADER, a);
        }
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().map_err(|e| format!("{method} {path}: {e}"))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| format!("{method} {path}: {e}"))?;
        if !status.is_success() {
            return Err(format!("{method} {path} answered {status}: {text}"));
        }
        serde_json::from_str(&text).map_err(|e| format!("{method} {path}: {e}: {text}"))
    }

    fn last_sms(&mut self, msisdn: &str) -> Result<String, String> {
        let v: Value = self.call("GET", &format!("/sms/outbox/{msisdn}"), None, None)?;
        let body = v["messages"]
            .as_array()
            .and_then(|m| m.last())
            .and_then(|m| m["body"].as_str())
            .ok_or_else(|| format!("no SMS for {msisdn}"))?
            .to_string();
        self.say(format!("  sms to {msisdn}: {}", body.replace('\n', " / ")));
        Ok(body)
    }

    fn register(&mut self, msisdn: &str, name: &str, bank: Option<&str>) -> Result<String, String> {
        let _: Value = self.call(
            "POST",
            "/register",
            None,
            Some(json!({
                "msisdn": msisdn, "full_name": name, "pin": "1234",
                "secret_question": "Home town?", "secret_answer": "Kananga",
                "bank_account": bank,
            })),
        )?;
        self.say(format!("registered {name} ({msisdn})"));
        let sms = self.last_sms(msisdn)?;
        let pw = sms
            .split("temporary password is ")
            .nth(1)
            .and_then(|r| r.split('.').next())
            .ok_or("welcome SMS carries no password")?;
        Ok(pw.to_string())
    }

    fn web_login(&mut self, msisdn: &str, temporary: &str) -> Result<String, String> {
        let v: Value = self.call(
            "POST",
            "/login",
            None,
            Some(json!({"channel": "WEB", "login_id": msisdn, "password": temporary})),
        )?;
        let token = v["token"].as_str().ok_or("login gave no token")?.to_string();
        let _: Value = self.call(
            "POST",
            "/password/change",
            Some(&token),
            Some(json!({"current_password": temporary, "new_password": "Kasai2024"})),
        )?;
        self.say(format!(
            "{msisdn} logged in on the web and replaced the temporary password"
        ));
        Ok(token)
    }

    fn ussd(&mut self, session: &str, msisdn: &str, inputs: &[&str]) -> Result<String, String> {
        let mut last = String::new();
        for (i, input) in std::iter::once(&"#555*").chain(inputs).enumerate() {
            let v: Value = self.call(
                "POST",
                "/ussd",
                None,
                Some(json!({"session_id": session, "msisdn": msisdn, "input": input})),
            )?;
            last = v["text"].as_str().unwrap_or_default().to_string();
            let shown = if i == 1 { "****" } else { input };
            self.say(format!("  [{msisdn}] > {shown}"));
            for l in last.lines() {
                self.say(format!("  [{msisdn}] | {l}"));
            }
        }
        Ok(last)
    }

    fn balance_of(&mut self, account: &str) -> Result<i64, String> {
        let v: Value = self.call("GET", "/admin/balances", None, None)?;
        Ok(v["accounts"]
            .as_array()
            .into_iter()
            .flatten()
            .find(|a| a["account"] == account)
            .and_then(|a| a["balance_minor"].as_i64())
            .unwrap_or(0))
    }

    fn expect(&mut self, what: &str, got: i64, want: i64) -> Result<(), String> {
        if got == want {
            self.say(format!("check {what}: {got} ok"));
            Ok(())
        } else {
            Err(format!("{what}: expected {want}, found {got}"))
        }
    }
}

/// Runs the walkthrough, writing a transcript to `out`.
pub fn run<W: Write>(base: &str, admin_token: Option<&str>, seed: bool, out: &mut W) -> Result<(), String> {
    let mut d = Driver {
        http: Client::new(),
        base: base.trim_end_matches('/').to_string(),
        admin: admin_token.map(String::from),
        out,
    };
    if seed {
        let v: Value = d.call(
            "POST",
            "/admin/seed",
            None,
            Some(serde_json::to_value(fixture()).map_err(|e| e.to_string())?),
        )?;
        d.say(format!("seeded {} provider records", v["provisioned"]));
    }

    let kayembe_pw = d.register(KAYEMBE, "Kayembe Ka Tshitupa", Some(KAYEMBE_BANK))?;
    let wife_pw = d.register(WIFE, "Mbuyi Kayembe", None)?;
    d.register(MOTHER, "Ngalula Tshitupa", None)?;
    d.register(SELLER, "Kananga General Store", Some("2003004005"))?;

    let k = d.web_login(KAYEMBE, &kayembe_pw)?;
    let _: Value = d.call("POST", "/recharge", Some(&k), Some(json!({"amount_minor": 200_000})))?;
    d.say("Kayembe recharged R2000 from his bank account");
    d.last_sms(KAYEMBE)?;

    let _: Value = d.call(
        "POST",
        "/transfers/wallet",
        Some(&k),
        Some(json!({"recipient_msisdn": WIFE, "amount_minor": 55_000, "source": "WALLET"})),
    )?;
    d.say("Kayembe sent R550 to his wife");
    d.last_sms(WIFE)?;

    d.say("wife dials the service");
    let root = d.ussd("wife-1", WIFE, &["1234", "2"])?;
    if !root.starts_with("1. Transfer money") {
        return Err(format!("wife did not reach the main menu: {root}"));
    }
    let end = d.ussd("wife-2", WIFE, &["1234", "1", "2", "200", "2", MOTHER, "1"])?;
    if !end.starts_with("transaction successful") {
        return Err(format!("transfer to mother failed: {end}"));
    }
    let end = d.ussd("wife-3", WIFE, &["1234", "1", "2", "150", "2", FATHER, "1"])?;
    if !end.starts_with("transaction successful") {
        return Err(format!("transfer to father failed: {end}"));
    }
    let father_sms = d.last_sms(FATHER)?;
    let father_code = first_code(&father_sms).ok_or("father's SMS carries no code")?;

    let w = d.web_login(WIFE, &wife_pw)?;
    let _: Value = d.call("POST", "/withdrawals", Some(&w), Some(json!({"amount_minor": 10_000})))?;
    let wife_code = first_code(&d.last_sms(WIFE)?).ok_or("withdrawal SMS carries no code")?;
    d.say("wife buys goods; the seller keys in her code");
    let _: Value = d.call(
        "POST",
        "/pos/charge",
        None,
        Some(json!({"buyer_msisdn": WIFE, "seller_msisdn": SELLER, "amount_minor": 10_000, "code": wife_code})),
    )?;
    d.last_sms(SELLER)?;

    d.say("father withdraws R100 of his R150 at an ATM");
    let r: Value = d.call(
        "POST",
        "/atm/redeem",
        None,
        Some(json!({"code": father_code, "msisdn": FATHER, "amount_minor": 10_000})),
    )?;
    d.say(format!(
        "  ATM dispensed; R{} left on the code",
        r["remaining"]["amount_minor"].as_i64().unwrap_or(-1) / 100
    ));

    let seller = d.balance_of(&format!("WALLET:{SELLER}"))?;
    d.expect("seller credited", seller, 10_000)?;
    let mother = d.balance_of(&format!("WALLET:{MOTHER}"))?;
    d.expect("mother's wallet", mother, 20_000)?;
    let wife = d.balance_of(&format!("WALLET:{WIFE}"))?;
    d.expect("wife's wallet", wife, 55_000 - 20_000 - 15_000 - 10_000)?;
    let k_bal = d.balance_of(&format!("WALLET:{KAYEMBE}"))?;
    d.expect("Kayembe's wallet", k_bal, 200_000 - 55_000)?;

    let audit: Value = d.call("GET", "/admin/audit", None, None)?;
    let detail = audit["detail"].as_str().unwrap_or_default().to_string();
    if audit["ok"] != true {
        return Err(format!("invariants broken: {detail}"));
    }
    d.say(format!("conservation check: {detail}"));
    Ok(())
}
