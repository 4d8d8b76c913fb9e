//! Offline checks over a rebuilt engine, recomputed from the raw journal.

use std::collections::BTreeMap;

use ewallet_core::providers::{Bank, Sms, Telco};
use ewallet_core::{AccountId, Engine};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub entries: usize,
    pub accounts: usize,
}

impl std::fmt::Display for AuditReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} entries, all invariants hold", self.entries)
    }
}

/// Conservation, overdraft, suspense and fold checks.
pub fn audit<T: Telco, B: Bank, S: Sms>(engine: &Engine<T, B, S>) -> Result<AuditReport, String> {
    let ledger = engine.ledger();
    let mut fold: BTreeMap<&AccountId, i128> = BTreeMap::new();
    for e in ledger.entries() {
        let mut sum = 0i128;
        for p in &e.postings {
            *fold.entry(&p.account).or_default() += i128::from(p.delta_minor);
            sum += i128::from(p.delta_minor);
        }
        if sum != 0 {
            return Err(format!("entry {} does not balance ({sum})", e.seq));
        }
    }
    let mut problems = Vec::new();
    if ledger.total() != 0 {
        problems.push(format!("balances sum to {} instead of 0", ledger.total()));
    }
    for (id, m) in ledger.accounts() {
        let folded = fold.get(id).copied().unwrap_or(0);
        if i128::from(m.amount_minor) != folded {
            problems.push(format!(
                "{id}: balance {} but journal folds to {folded}",
                m.amount_minor
            ));
        }
        if id.kind.is_protected() && m.amount_minor < 0 {
            problems.push(format!("{id} is overdrawn ({})", m.amount_minor));
        }
    }
    let suspense = ledger
        .balance(&AccountId::suspense())
        .map(|m| m.amount_minor)
        .unwrap_or(0);
    if suspense != engine.codes().live_total() {
        problems.push(format!(
            "SUSPENSE holds {suspense} but live codes total {}",
            engine.codes().live_total()
        ));
    }
    for c in engine.codes().iter() {
        if c.redeemed + c.remaining + c.refunded != c.issued_amount {
            problems.push(format!("code {} does not add up", c.id));
        }
    }
    if problems.is_empty() {
        Ok(AuditReport {
            entries: ledger.entries().len(),
            accounts: ledger.accounts().count(),
        })
    } else {
        Err(problems.join("; "))
    }
}
