use alloc::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::TxnKind;

/// `flat + round_half_up(amount × percent_bp / 10 000)` for the kinds the
/// schedule applies to, zero otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeeSchedule {
    #[serde(default)]
    pub percent_bp: u32,
    #[serde(default)]
    pub flat_minor: i64,
    #[serde(default = "all_kinds")]
    pub applies_to: BTreeSet<TxnKind>,
}

fn all_kinds() -> BTreeSet<TxnKind> {
    TxnKind::ALL.iter().copied().collect()
}

impl Default for FeeSchedule {
    fn default() -> Self {
        Self {
            percent_bp: 0,
            flat_minor: 0,
            applies_to: all_kinds(),
        }
    }
}

impl FeeSchedule {
    /// 10 %, the rate money-transfer agencies charge.
    pub fn agency_comparison() -> Self {
        Self {
            percent_bp: 1_000,
            ..Self::default()
        }
    }

    pub fn fee(&self, kind: TxnKind, amount_minor: i64) -> i64 {
        if amount_minor <= 0 || !self.applies_to.contains(&kind) {
            return 0;
        }
        let scaled = i128::from(amount_minor) * i128::from(self.percent_bp);
        let pct = (scaled + 5_000) / 10_000;
        let total = i128::from(self.flat_minor) + pct;
        total.clamp(0, i128::from(i64::MAX)) as i64
    }

    pub fn is_valid(&self) -> bool {
        self.flat_minor >= 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_free() {
        let f = FeeSchedule::default();
        for k in TxnKind::ALL {
            assert_eq!(f.fee(*k, 55_000), 0);
        }
    }

    #[test]
    fn agency_ten_percent_of_r550() {
        assert_eq!(FeeSchedule::agency_comparison().fee(TxnKind::P2p, 55_000), 5_500);
    }

    #[test]
    fn rounds_half_up() {
        let f = FeeSchedule {
            percent_bp: 150,
            ..FeeSchedule::default()
        };
        // 100 × 1.5 % = 1.5 → 2; 99 × 1.5 % = 1.485 → 1; 1 × 1.5% = 0.015 → 0
        assert_eq!(f.fee(TxnKind::P2p, 100), 2);
        assert_eq!(f.fee(TxnKind::P2p, 99), 1);
        assert_eq!(f.fee(TxnKind::P2p, 1), 0);
        let f = FeeSchedule {
            percent_bp: 5_000,
            ..FeeSchedule::default()
        };
        assert_eq!(f.fee(TxnKind::P2p, 1), 1);
        assert_eq!(f.fee(TxnKind::P2p, 3), 2);
    }

    #[test]
    fn flat_and_kind_filter() {
        let mut f = FeeSchedule {
            percent_bp: 100,
            flat_minor: 250,
            applies_to: [TxnKind::WalletToBank].into_iter().collect(),
        };
        assert_eq!(f.fee(TxnKind::WalletToBank, 10_000), 350);
        assert_eq!(f.fee(TxnKind::P2p, 10_000), 0);
        f.flat_minor = -1;
        assert!(!f.is_valid());
    }
}
