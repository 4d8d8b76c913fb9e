mod common;

use std::sync::Arc;

use common::*;
use ewallet::service::{rebuild, StartupError};
use ewallet_core::engine::{Application, FundingSource};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Recharge(i64),
    Send(usize, i64),
    Withdraw(i64),
    ToBank(i64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (1i64..200_000).prop_map(Op::Recharge),
        (0usize..3, 1i64..80_000).prop_map(|(i, a)| Op::Send(i, a)),
        (1i64..50_000).prop_map(Op::Withdraw),
        (1i64..50_000).prop_map(Op::ToBank),
    ]
}

fn application(msisdn: &str, bank: Option<&str>) -> Application {
    Application {
        msisdn: msisdn.into(),
        full_name: "Member".into(),
        pin: "1234".into(),
        secret_question: "Q?".into(),
        secret_answer: "a".into(),
        bank_account: bank.map(Into::into),
    }
}

/// Applies `ops` through the running service; refusals are fine, they
/// simply leave nothing in the journal.
fn drive(h: &Harness, ops: &[Op]) {
    let mut st = h.svc.lock();
    let e = &mut st.engine;
    e.register(&application(KAYEMBE, Some(KAYEMBE_BANK))).unwrap();
    e.register(&application(WIFE, None)).unwrap();
    let targets = [WIFE, MOTHER, FATHER];
    for (i, op) in ops.iter().enumerate() {
        let key = format!("op{i}");
        let _ = match op {
            Op::Recharge(a) => e.recharge(KAYEMBE, *a, &key).map(|_| ()),
            Op::Send(t, a) => e
                .transfer_wallet_to_wallet(KAYEMBE, targets[*t], *a, FundingSource::Auto, &key)
                .map(|_| ()),
            Op::Withdraw(a) => e.request_withdrawal(KAYEMBE, *a, &key).map(|_| ()),
            Op::ToBank(a) => e.transfer_wallet_to_bank(KAYEMBE, STORE_BANK, *a, &key).map(|_| ()),
        };
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn journal_replay_reproduces_balances(ops in prop::collection::vec(op(), 1..40)) {
        let h = Harness::new();
        drive(&h, &ops);
        let st = h.svc.lock();
        let replayed = rebuild(&h.config, Arc::new(h.clock.clone()), &h.journal(), 0).unwrap();
        prop_assert_eq!(replayed.ledger().last_seq(), st.engine.ledger().last_seq());
        let replayed_accounts: Vec<_> = replayed.ledger().accounts().collect();
        let live_accounts: Vec<_> = st.engine.ledger().accounts().collect();
        prop_assert_eq!(replayed_accounts, live_accounts);
        prop_assert_eq!(replayed.codes().live_total(), st.engine.codes().live_total());
    }

    #[test]
    fn torn_tail_fails_closed(ops in prop::collection::vec(op(), 1..20), cut in 1usize..64) {
        let h = Harness::new();
        drive(&h, &ops);
        let path = h.journal();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines = text.lines().count();
        let last_len = text.lines().last().unwrap().len();
        // drop the newline plus part of the last entry
        let keep = text.len() - 1 - cut.min(last_len - 1);
        std::fs::write(&path, &text[..keep]).unwrap();
        match rebuild(&h.config, Arc::new(h.clock.clone()), &path, 0) {
            Err(StartupError::Journal(e)) => prop_assert!(e.to_string().contains(&format!("line {lines}")), "{}", e),
            Err(other) => prop_assert!(false, "unexpected error {}", other),
            Ok(_) => prop_assert!(false, "torn line accepted"),
        }
    }
}
