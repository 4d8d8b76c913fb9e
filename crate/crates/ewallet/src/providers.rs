//! Process-level provider plumbing: wall clock and a bank wrapper that
//! honours the fault plan's latency.

use std::time::Duration;

use ewallet_core::error::Result;
use ewallet_core::providers::{Bank, BankAccountCheck, EftDirection, EftReceipt, FaultPlan, SimulatedBank};
use ewallet_core::time::{Clock, Timestamp};

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        chrono::Utc::now()
    }
}

/// The simulated bank, slowed down by `FaultPlan::latency_ms` per call.
#[derive(Debug, Clone, Default)]
pub struct LatentBank {
    pub inner: SimulatedBank,
}

impl LatentBank {
    fn pause(&self) {
        let ms = self.inner.faults().latency_ms;
        if ms > 0 {
            std::thread::sleep(Duration::from_millis(ms));
        }
    }
}

impl Bank for LatentBank {
    fn validate_account(&mut self, number: &str) -> Result<BankAccountCheck> {
        self.pause();
        self.inner.validate_account(number)
    }

    fn available(&mut self, number: &str) -> Result<i64> {
        self.pause();
        self.inner.available(number)
    }

    fn eft(&mut self, direction: EftDirection, number: &str, amount_minor: i64, reference: &str) -> Result<EftReceipt> {
        self.pause();
        self.inner.eft(direction, number, amount_minor, reference)
    }

    fn provision(&mut self, number: &str, holder: &str, balance_minor: i64) -> Result<()> {
        self.inner.provision(number, holder, balance_minor)
    }

    fn arm_faults(&mut self, plan: FaultPlan) {
        self.inner.arm_faults(plan)
    }

    fn faults(&self) -> FaultPlan {
        self.inner.faults()
    }

    fn health(&self) -> bool {
        self.inner.health()
    }

    fn replay_eft(&mut self, direction: EftDirection, number: &str, amount_minor: i64, reference: &str) -> Result<()> {
        self.inner.replay_eft(direction, number, amount_minor, reference)
    }
}
