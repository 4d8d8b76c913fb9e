#![allow(dead_code)]

use std::sync::Arc;

use ewallet_core::engine::{Application, EngineConfig};
use ewallet_core::providers::{SeedBankAccount, SeedFixture, SeedMsisdn};
use ewallet_core::time::ManualClock;
use ewallet_core::{AccountId, Engine};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const PEOPLE: [&str; 5] = [
    "27820000001",
    "27820000002",
    "27830000003",
    "27840000004",
    "27820000005",
];
pub const STRANGER: &str = "243810000006";
pub const BANKS: [&str; 2] = ["1002003004", "2003004005"];
pub const BANK_SEED: i64 = 1_500_000;

pub fn fixture() -> SeedFixture {
    let mut msisdns: Vec<SeedMsisdn> = PEOPLE
        .iter()
        .map(|m| SeedMsisdn {
            msisdn: m.to_string(),
            carrier: "Vodacom".into(),
        })
        .collect();
    msisdns.push(SeedMsisdn {
        msisdn: STRANGER.into(),
        carrier: "Airtel".into(),
    });
    SeedFixture {
        msisdns,
        bank_accounts: BANKS
            .iter()
            .map(|b| SeedBankAccount {
                number: b.to_string(),
                holder: format!("holder of {b}"),
                balance_minor: BANK_SEED,
            })
            .collect(),
    }
}

/// Five registered people; the first two have linked bank accounts.
pub fn cast(config: EngineConfig, seed: u64) -> (Engine, ManualClock) {
    let clock = ManualClock::at_default_epoch();
    let mut e = Engine::simulated(
        config,
        Arc::new(clock.clone()),
        Box::new(ChaCha8Rng::seed_from_u64(seed)),
    );
    e.seed(&fixture()).unwrap();
    for (i, m) in PEOPLE.iter().enumerate() {
        e.register(&Application {
            msisdn: m.to_string(),
            full_name: format!("Person {i}"),
            pin: "1234".into(),
            secret_question: "Q?".into(),
            secret_answer: "a".into(),
            bank_account: BANKS.get(i).map(|b| b.to_string()),
        })
        .unwrap();
    }
    (e, clock)
}

pub fn replayed(e: &Engine) -> Engine {
    let clock = ManualClock::at_default_epoch();
    let mut r = Engine::simulated(
        e.config().clone(),
        Arc::new(clock),
        Box::new(ChaCha8Rng::seed_from_u64(0)),
    );
    for entry in e.ledger().entries() {
        r.restore(entry.clone()).unwrap();
    }
    r
}

/// Checks the money invariants that must hold after every operation.
pub fn check_invariants(e: &Engine) {
    assert_eq!(e.ledger().total(), 0, "journal does not sum to zero");
    let suspense = e.ledger().balance(&AccountId::suspense()).unwrap().amount_minor;
    assert_eq!(suspense, e.codes().live_total(), "SUSPENSE differs from live codes");
    for c in e.codes().iter() {
        assert_eq!(
            c.redeemed + c.remaining + c.refunded,
            c.issued_amount,
            "code {} leaks",
            c.id
        );
        assert!(c.remaining >= 0);
    }
    for (id, m) in e.ledger().accounts() {
        if id.kind.is_protected() {
            assert!(m.amount_minor >= 0, "{id} is negative");
        }
    }
    for b in BANKS {
        let mirror = e
            .ledger()
            .balance(&AccountId::bank_mirror(b))
            .map(|m| m.amount_minor)
            .unwrap_or(0);
        let bank = e.providers().bank.account(b).unwrap().balance_minor;
        assert_eq!(bank, BANK_SEED + mirror, "bank {b} does not reconcile");
    }
}
