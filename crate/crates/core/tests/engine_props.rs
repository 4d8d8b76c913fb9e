mod common;

use chrono::TimeDelta;
use common::*;
use ewallet_core::engine::{CodeTarget, EngineConfig, FeeSchedule, FundingSource, MerchantFunding, TxnKind, TxnState};
use ewallet_core::providers::{Bank, FaultPlan};
use ewallet_core::time::Clock;
use ewallet_core::{Engine, ErrorCode};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Recharge(usize, i64),
    P2p(usize, usize, i64, u8),
    Parcel(usize, i64),
    ToBank(usize, usize, i64),
    BankToBank(usize, i64),
    Withdraw(usize, i64),
    Atm(usize, i64),
    Pos(usize, usize, i64),
    CodeToWallet(usize),
    Tick(i64),
    Fault(u32),
    Replay,
}

fn op() -> impl Strategy<Value = Op> {
    let who = 0usize..PEOPLE.len();
    let amt = 1i64..200_000;
    prop_oneof![
        (0usize..2, amt.clone()).prop_map(|(a, b)| Op::Recharge(a, b)),
        (who.clone(), who.clone(), amt.clone(), 0u8..3).prop_map(|(a, b, c, d)| Op::P2p(a, b, c, d)),
        (who.clone(), amt.clone()).prop_map(|(a, b)| Op::Parcel(a, b)),
        (who.clone(), 0usize..2, amt.clone()).prop_map(|(a, b, c)| Op::ToBank(a, b, c)),
        (0usize..2, amt.clone()).prop_map(|(a, b)| Op::BankToBank(a, b)),
        (who.clone(), amt.clone()).prop_map(|(a, b)| Op::Withdraw(a, b)),
        (0usize..8, amt.clone()).prop_map(|(a, b)| Op::Atm(a, b)),
        (0usize..8, who.clone(), amt).prop_map(|(a, b, c)| Op::Pos(a, b, c)),
        (0usize..8).prop_map(Op::CodeToWallet),
        (1i64..48).prop_map(Op::Tick),
        (1u32..3).prop_map(Op::Fault),
        Just(Op::Replay),
    ]
}

/// Codes read from SMS, as a person holding the phone would.
#[derive(Default)]
struct Wallet {
    codes: Vec<(String, String)>,
}

fn code_in(e: &Engine, to: &str) -> Option<String> {
    let body = e.providers().sms.last_to(to)?.body.clone();
    body.split(|c: char| !c.is_ascii_digit())
        .find(|w| w.len() == 8)
        .map(String::from)
}

fn apply(e: &mut Engine, clock: &ewallet_core::time::ManualClock, w: &mut Wallet, op: &Op, n: usize) {
    let key = format!("k{n}");
    let before = e.ledger().entries().len();
    let failures = e.failures().len();
    let result: Result<(), ewallet_core::Error> = match op {
        Op::Recharge(a, amt) => e.recharge(PEOPLE[*a], *amt, &key).map(|_| ()),
        Op::P2p(a, b, amt, src) => {
            let src = [FundingSource::Auto, FundingSource::Wallet, FundingSource::Bank][*src as usize];
            e.transfer_wallet_to_wallet(PEOPLE[*a], PEOPLE[*b], *amt, src, &key)
                .map(|_| ())
        }
        Op::Parcel(a, amt) => {
            let r = e.transfer_wallet_to_wallet(PEOPLE[*a], STRANGER, *amt, FundingSource::Wallet, &key);
            if r.is_ok() {
                w.codes.push((STRANGER.into(), code_in(e, STRANGER).unwrap()));
            }
            r.map(|_| ())
        }
        Op::ToBank(a, b, amt) => e.transfer_wallet_to_bank(PEOPLE[*a], BANKS[*b], *amt, &key).map(|_| ()),
        Op::BankToBank(a, amt) => e
            .transfer_bank_to_bank(PEOPLE[*a], BANKS[1 - *a], *amt, &key)
            .map(|_| ()),
        Op::Withdraw(a, amt) => {
            let r = e.request_withdrawal(PEOPLE[*a], *amt, &key);
            if r.is_ok() {
                w.codes.push((PEOPLE[*a].into(), code_in(e, PEOPLE[*a]).unwrap()));
            }
            r.map(|_| ())
        }
        Op::Atm(i, amt) => match w.codes.get(*i) {
            Some((holder, code)) => e.redeem_at_atm(code, holder, *amt, &key).map(|_| ()),
            None => Ok(()),
        },
        Op::Pos(i, seller, amt) => match w.codes.get(*i) {
            Some((holder, code)) => e
                .pay_merchant(
                    holder,
                    PEOPLE[*seller],
                    *amt,
                    &MerchantFunding::Code(code.clone()),
                    &key,
                )
                .map(|_| ()),
            None => Ok(()),
        },
        Op::CodeToWallet(i) => match w.codes.get(*i) {
            Some((holder, code)) => e
                .transfer_from_code(holder, code, &CodeTarget::Wallet(PEOPLE[0].into()), &key)
                .map(|_| ()),
            None => Ok(()),
        },
        Op::Tick(hours) => {
            clock.advance(TimeDelta::hours(*hours));
            e.expire_codes(clock.now());
            Ok(())
        }
        Op::Fault(n) => {
            e.providers_mut().bank.arm_faults(FaultPlan {
                fail_next: *n,
                latency_ms: 0,
            });
            Ok(())
        }
        Op::Replay => Ok(()),
    };
    if let Err(err) = result {
        // failures never touch the journal
        assert_eq!(
            e.ledger().entries().len(),
            before,
            "{op:?} failed with {err:?} but wrote"
        );
        if e.failures().len() > failures {
            let t = e.failures().last().unwrap();
            assert_eq!(t.state, TxnState::Failed);
            assert_eq!(t.failure_reason, Some(err.code));
        }
    }
    // the same key repeated with the same request never posts twice
    if let Op::Recharge(a, amt) = op {
        let len = e.ledger().entries().len();
        let _ = e.recharge(PEOPLE[*a], *amt, &key);
        if e.ledger().entries().len() != len {
            // only allowed when the first attempt failed and the retry went through
            assert!(e.ledger().entries().len() == len + 1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn invariants_hold_under_random_operations(ops in prop::collection::vec(op(), 1..80), fee_bp in prop_oneof![Just(0u32), Just(1_000u32), 0u32..300]) {
        let config = EngineConfig {
            fees: FeeSchedule { percent_bp: fee_bp, ..FeeSchedule::default() },
            ..EngineConfig::default()
        };
        let (mut e, clock) = cast(config, 11);
        let mut w = Wallet::default();
        for (n, op) in ops.iter().enumerate() {
            apply(&mut e, &clock, &mut w, op, n);
            check_invariants(&e);
            if let Op::Replay = op {
                let r = replayed(&e);
                check_invariants(&r);
                for (id, m) in e.ledger().accounts() {
                    prop_assert_eq!(r.ledger().balance(id).unwrap(), m);
                }
            }
        }
        e.providers_mut().bank.arm_faults(FaultPlan::default());
        let r = replayed(&e);
        check_invariants(&r);
        prop_assert_eq!(r.codes().live_total(), e.codes().live_total());
    }

    #[test]
    fn fee_is_deterministic_and_bounded(amount in 1i64..i64::MAX / 20_000, bp in 0u32..10_000, flat in 0i64..10_000) {
        let f = FeeSchedule { percent_bp: bp, flat_minor: flat, ..FeeSchedule::default() };
        for k in TxnKind::ALL {
            let a = f.fee(*k, amount);
            prop_assert_eq!(a, f.fee(*k, amount));
            // oracle: round half up of amount * bp / 10000, in u128
            let oracle = flat as u128 + (amount as u128 * bp as u128 * 2 + 10_000) / 20_000;
            prop_assert_eq!(a as u128, oracle);
        }
    }
}

#[test]
fn engine_faults_leave_no_trace() {
    let (mut e, _) = cast(EngineConfig::default(), 1);
    e.recharge(PEOPLE[0], 100_000, "r").unwrap();
    for (n, plan) in [1u32, 2].iter().enumerate() {
        e.providers_mut().bank.arm_faults(FaultPlan {
            fail_next: *plan,
            latency_ms: 0,
        });
        let before = e.ledger().entries().len();
        let err = e
            .transfer_wallet_to_bank(PEOPLE[0], BANKS[1], 1_000, &format!("wb{n}"))
            .unwrap_err();
        assert_eq!(err.code, ErrorCode::ProviderUnavailable);
        assert_eq!(e.ledger().entries().len(), before);
        check_invariants(&e);
        e.providers_mut().bank.arm_faults(FaultPlan::default());
    }
}
