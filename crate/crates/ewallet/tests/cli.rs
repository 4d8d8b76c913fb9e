mod common;

use std::process::{Command, Output};

use common::*;
use serde_json::json;

fn ewallet(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ewallet"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn replay_over_empty_journal() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("never-written.journal");
    let o = ewallet(&["replay", missing.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "0 entries, all invariants hold");

    let empty = dir.path().join("empty.journal");
    std::fs::write(&empty, "").unwrap();
    let o = ewallet(&["replay", empty.to_str().unwrap()], &[]);
    assert_eq!(stdout(&o).trim(), "0 entries, all invariants hold");
}

#[tokio::test]
async fn replay_and_statement_of_a_live_journal() {
    let h = Harness::new();
    let k = h.member(KAYEMBE, Some(KAYEMBE_BANK)).await;
    h.ok("/recharge", Some(&k), json!({"amount_minor": 55_000})).await;
    let journal = h.journal();
    let n = h.entries();

    let o = ewallet(&["replay", journal.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), format!("{n} entries, all invariants hold"));

    let o = ewallet(&["--journal", journal.to_str().unwrap(), "statement", KAYEMBE], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("RECHARGE"), "{out}");
    assert!(out.trim_end().ends_with("1 entries, balance R550"), "{out}");
}

#[tokio::test]
async fn replay_rejects_a_corrupt_line_with_its_number() {
    let h = Harness::new();
    h.member(KAYEMBE, Some(KAYEMBE_BANK)).await;
    let journal = h.journal();
    let mut text = std::fs::read_to_string(&journal).unwrap();
    text.push_str("{\"seq\": \"not a number\"}\n");
    std::fs::write(&journal, &text).unwrap();
    let line = text.lines().count();

    let o = ewallet(&["replay", journal.to_str().unwrap()], &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains(&format!("line {line}")), "{}", stderr(&o));
}

#[test]
fn unbalanced_entry_fails_closed() {
    let dir = tempfile::tempdir().unwrap();
    let j = dir.path().join("bad.journal");
    std::fs::write(
        &j,
        concat!(
            r#"{"seq":1,"ts":"2026-01-01T00:00:00Z","txn_id":"t1","type":"P2P","postings":["#,
            r#"{"account":"SUSPENSE:EWALLET-POOL","delta_minor":-1,"currency":"ZAR"},"#,
            r#"{"account":"FEE_INCOME:EWALLET-FEES","delta_minor":2,"currency":"ZAR"}],"meta":{}}"#,
            "\n"
        ),
    )
    .unwrap();
    let o = ewallet(&["replay", j.to_str().unwrap()], &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn invalid_configuration_aborts_with_a_diagnostic() {
    let o = ewallet(&["replay", "x.journal"], &[("EWALLET_LOCK_THRESHOLD", "0")]);
    assert!(!o.status.success());
    assert!(
        stderr(&o).contains("lock_threshold must be at least 1"),
        "{}",
        stderr(&o)
    );

    let o = ewallet(&["replay", "x.journal"], &[("EWALLET_LOCK_TRESHOLD", "3")]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown environment override EWALLET_LOCK_TRESHOLD"));

    let o = ewallet(&["--listen", "not-an-address", "replay", "x.journal"], &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("listen"));
}

#[test]
fn seed_and_unlock_against_a_running_service() {
    let (url, _dir) = ewallet::scenario::self_host(ewallet::config::Config::default()).unwrap();
    let fixture = fixture_path();
    let o = ewallet(&["seed", fixture.to_str().unwrap(), "--url", &url], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "provisioned 8 records");

    let http = reqwest::blocking::Client::new();
    let r = http
        .post(format!("{url}/register"))
        .json(
            &json!({"msisdn": WIFE, "full_name": "Mbuyi", "pin": "1234", "secret_question": "Q", "secret_answer": "A"}),
        )
        .send()
        .unwrap();
    assert!(r.status().is_success());

    let o = ewallet(&["unlock", WIFE, "--url", &url], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("already active; nothing to do"), "{}", stdout(&o));

    for _ in 0..3 {
        http.post(format!("{url}/login"))
            .json(&json!({"channel": "USSD", "msisdn": WIFE, "pin": "9999"}))
            .send()
            .unwrap();
    }
    let o = ewallet(&["unlock", WIFE, "--url", &url], &[]);
    assert_eq!(stdout(&o).trim(), format!("{WIFE} unlocked"));

    let o = ewallet(&["unlock", "27999999999", "--url", &url], &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("UNKNOWN_MSISDN"), "{}", stderr(&o));
}
