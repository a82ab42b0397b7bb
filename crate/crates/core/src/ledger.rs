//! Trajectory ledger and the three budget-condition checkers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::Indicators;

/// Default absolute tolerance of the checkers.
pub const DEFAULT_TOL: f64 = 1e-10;

/// One tested hypothesis as seen by the checkers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub index: usize,
    pub level: f64,
    pub tau: f64,
    pub lambda: f64,
    /// τ - λ, stored so checkers never re-derive it.
    pub gap: f64,
    pub indicators: Option<Indicators>,
    /// Joint-tail probability α^c, for correlation-exploiting procedures.
    pub alpha_c: Option<f64>,
}

impl LedgerEntry {
    pub fn new(index: usize, level: f64, tau: f64, lambda: f64) -> Self {
        Self {
            index,
            level,
            tau,
            lambda,
            gap: tau - lambda,
            indicators: None,
            alpha_c: None,
        }
    }

    pub fn with_indicators(mut self, ind: Indicators) -> Self {
        self.indicators = Some(ind);
        self
    }

    pub fn with_alpha_c(mut self, alpha_c: f64) -> Self {
        self.alpha_c = Some(alpha_c);
        self
    }

    fn spend_term(&self) -> Result<f64> {
        let ind = self.indicators.ok_or(Error::IncompleteLedger { index: self.index })?;
        Ok(if ind.spends() { self.level / self.gap } else { 0.0 })
    }
}

/// Ordered, gap-free record of a trajectory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLedger {
    entries: Vec<LedgerEntry>,
}

impl TrajectoryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append an entry; indices must run 1, 2, 3, …
    pub fn push(&mut self, entry: LedgerEntry) -> Result<()> {
        let expected = self.entries.len() + 1;
        if entry.index != expected {
            return Err(Error::LedgerGap {
                expected,
                got: entry.index,
            });
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn set_indicators(&mut self, index: usize, ind: Indicators) -> Result<()> {
        let e = self.entries.get_mut(index.wrapping_sub(1)).ok_or(Error::UnknownIndex(index))?;
        e.indicators = Some(ind);
        Ok(())
    }

    pub fn set_alpha_c(&mut self, index: usize, alpha_c: f64) -> Result<()> {
        let e = self.entries.get_mut(index.wrapping_sub(1)).ok_or(Error::UnknownIndex(index))?;
        e.alpha_c = Some(alpha_c);
        Ok(())
    }

    /// Prefix sums Σ_{j≤i} α_j/(τ_j-λ_j)(S_j-C_j).
    pub fn budget_prefix(&self) -> Result<Vec<f64>> {
        let mut acc = 0.0;
        self.entries
            .iter()
            .map(|e| {
                acc += e.spend_term()?;
                Ok(acc)
            })
            .collect()
    }

    /// |R(i)| for every prefix.
    pub fn rejection_prefix(&self) -> Result<Vec<usize>> {
        let mut acc = 0;
        self.entries
            .iter()
            .map(|e| {
                let ind = e.indicators.ok_or(Error::IncompleteLedger { index: e.index })?;
                acc += ind.r as usize;
                Ok(acc)
            })
            .collect()
    }
}

/// Outcome of a budget-condition check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    pub passed: bool,
    /// Largest left-hand side over all prefixes.
    pub max_spend: f64,
    /// Largest `lhs - rhs` over all prefixes (≤ tol iff passed).
    pub worst_excess: f64,
    /// Prefix attaining `worst_excess`; `None` for an empty ledger.
    pub worst_index: Option<usize>,
}

fn scan(
    lhs: impl IntoIterator<Item = Result<(usize, f64, f64)>>,
    tol: f64,
) -> Result<ConditionReport> {
    let mut max_spend = 0.0f64;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_index = None;
    for item in lhs {
        let (index, spend, bound) = item?;
        max_spend = max_spend.max(spend);
        let excess = spend - bound;
        if excess > worst_excess {
            worst_excess = excess;
            worst_index = Some(index);
        }
    }
    if worst_index.is_none() {
        worst_excess = 0.0;
    }
    Ok(ConditionReport {
        passed: worst_excess <= tol,
        max_spend,
        worst_excess,
        worst_index,
    })
}

/// Σ_{j≤i} α_j/(τ_j-λ_j)(S_j-C_j) ≤ α + tol for every prefix i.
pub fn check_fwer_condition(ledger: &TrajectoryLedger, alpha: f64, tol: f64) -> Result<ConditionReport> {
    let mut acc = 0.0;
    scan(
        ledger.entries.iter().map(|e| {
            acc += e.spend_term()?;
            Ok((e.index, acc, alpha))
        }),
        tol,
    )
}

/// Σ_{j≤i} α_j/(τ_j-λ_j)(S_j-C_j) ≤ α·(|R(i)| ∨ 1) + tol for every prefix i.
pub fn check_fdr_condition(ledger: &TrajectoryLedger, alpha: f64, tol: f64) -> Result<ConditionReport> {
    let mut acc = 0.0;
    let mut rejections = 0usize;
    scan(
        ledger.entries.iter().map(|e| {
            acc += e.spend_term()?;
            rejections += e.indicators.is_some_and(|i| i.r) as usize;
            Ok((e.index, acc, alpha * rejections.max(1) as f64))
        }),
        tol,
    )
}

/// Σ_{j≤i} α^c_j/(1-λ_{b_j})(1-C_j) ≤ α + tol for every prefix i. Entries
/// carry λ_{b_j} and must have τ = 1.
pub fn check_corr_condition(ledger: &TrajectoryLedger, alpha: f64, tol: f64) -> Result<ConditionReport> {
    let mut acc = 0.0;
    scan(
        ledger.entries.iter().map(|e| {
            if e.tau != 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "correlation condition needs tau = 1, entry {} has {}",
                    e.index, e.tau
                )));
            }
            let ind = e.indicators.ok_or(Error::IncompleteLedger { index: e.index })?;
            let ac = e.alpha_c.ok_or(Error::MissingAlphaC { index: e.index })?;
            if !ind.c {
                acc += ac / (1.0 - e.lambda);
            }
            Ok((e.index, acc, alpha))
        }),
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicators::compute_indicators;
    use proptest::prelude::*;

    fn entry(index: usize, level: f64, tau: f64, lambda: f64, p: f64) -> LedgerEntry {
        LedgerEntry::new(index, level, tau, lambda)
            .with_indicators(compute_indicators(p, tau, lambda, level).unwrap())
    }

    #[test]
    fn empty_ledger_passes() {
        let l = TrajectoryLedger::new();
        let r = check_fwer_condition(&l, 0.2, DEFAULT_TOL).unwrap();
        assert!(r.passed);
        assert_eq!(r.max_spend, 0.0);
        assert!(check_fdr_condition(&l, 0.05, DEFAULT_TOL).unwrap().passed);
        assert!(check_corr_condition(&l, 0.2, DEFAULT_TOL).unwrap().passed);
    }

    #[test]
    fn overspending_single_entry_fails() {
        let mut l = TrajectoryLedger::new();
        l.push(entry(1, 0.2, 0.8, 0.16, 0.5)).unwrap();
        let r = check_fwer_condition(&l, 0.2, DEFAULT_TOL).unwrap();
        assert!(!r.passed);
        assert!((r.max_spend - 0.3125).abs() < 1e-15);
        assert_eq!(r.worst_index, Some(1));
    }

    #[test]
    fn fdr_one_entry_no_rejection() {
        // Spend 0.04 with no rejection against α = 0.05.
        let mut l = TrajectoryLedger::new();
        l.push(entry(1, 0.04 * 0.25, 0.5, 0.25, 0.4)).unwrap();
        let r = check_fdr_condition(&l, 0.05, DEFAULT_TOL).unwrap();
        assert!(r.passed);
        assert!((r.max_spend - 0.04).abs() < 1e-15);
    }

    #[test]
    fn corr_condition_cases() {
        let mut l = TrajectoryLedger::new();
        for i in 1..=3 {
            l.push(entry(i, 0.05, 1.0, 0.2, 0.1).with_alpha_c(0.05)).unwrap();
        }
        // Every C_j = 1 annihilates the sum.
        assert_eq!(check_corr_condition(&l, 0.2, DEFAULT_TOL).unwrap().max_spend, 0.0);

        let mut l = TrajectoryLedger::new();
        l.push(entry(1, 0.05, 1.0, 0.2, 0.5)).unwrap();
        assert_eq!(
            check_corr_condition(&l, 0.2, DEFAULT_TOL).unwrap_err(),
            Error::MissingAlphaC { index: 1 }
        );
    }

    #[test]
    fn singleton_corr_agrees_with_fwer() {
        let mut l = TrajectoryLedger::new();
        let ps = [0.5, 0.01, 0.9, 0.3, 0.15];
        for (k, p) in ps.iter().enumerate() {
            let level = 0.03 / (k + 1) as f64;
            l.push(entry(k + 1, level, 1.0, 0.2, *p).with_alpha_c(level)).unwrap();
        }
        let a = check_fwer_condition(&l, 0.2, DEFAULT_TOL).unwrap();
        let b = check_corr_condition(&l, 0.2, DEFAULT_TOL).unwrap();
        assert!((a.max_spend - b.max_spend).abs() < 1e-15);
        assert_eq!(a.passed, b.passed);
    }

    #[test]
    fn missing_indicators_and_gaps() {
        let mut l = TrajectoryLedger::new();
        l.push(LedgerEntry::new(1, 0.01, 0.8, 0.16)).unwrap();
        assert_eq!(
            check_fwer_condition(&l, 0.2, DEFAULT_TOL).unwrap_err(),
            Error::IncompleteLedger { index: 1 }
        );
        assert_eq!(
            l.push(LedgerEntry::new(3, 0.01, 0.8, 0.16)).unwrap_err(),
            Error::LedgerGap { expected: 2, got: 3 }
        );
    }

    fn random_ledger() -> impl Strategy<Value = TrajectoryLedger> {
        prop::collection::vec((0.0f64..0.05, 0.0f64..1.0), 0..60).prop_map(|rows| {
            let mut l = TrajectoryLedger::new();
            for (k, (level, p)) in rows.into_iter().enumerate() {
                l.push(entry(k + 1, level, 0.8, 0.16, p)).unwrap();
            }
            l
        })
    }

    proptest! {
        #[test]
        fn budget_is_monotone_and_recomputable(l in random_ledger()) {
            let prefix = l.budget_prefix().unwrap();
            for w in prefix.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            if let Some(&last) = prefix.last() {
                let reverse: f64 = l.entries().iter().rev()
                    .map(|e| if e.indicators.unwrap().spends() { e.level / e.gap } else { 0.0 })
                    .sum();
                prop_assert!((last - reverse).abs() <= 1e-12 * last.abs().max(f64::MIN_POSITIVE));
            }
            let r = l.rejection_prefix().unwrap();
            for (k, e) in l.entries().iter().enumerate() {
                let count = l.entries()[..=k].iter().filter(|x| x.indicators.unwrap().r).count();
                prop_assert_eq!(r[k], count);
                let ind = e.indicators.unwrap();
                prop_assert!(!ind.c || ind.s);
            }
        }

        #[test]
        fn fwer_pass_implies_fdr_pass(l in random_ledger(), alpha in 0.01f64..0.5) {
            let f = check_fwer_condition(&l, alpha, DEFAULT_TOL).unwrap();
            let d = check_fdr_condition(&l, alpha, DEFAULT_TOL).unwrap();
            if f.passed {
                prop_assert!(d.passed);
            }
        }
    }
}
