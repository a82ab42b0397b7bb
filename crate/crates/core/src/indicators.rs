//! Per-hypothesis threshold indicators and the hypothesis record.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold indicators of one tested p-value. Thresholds are closed: a
/// p-value equal to a threshold counts as a hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Indicators {
    /// `P <= tau` (candidate, not discarded).
    pub s: bool,
    /// `P <= lambda`.
    pub c: bool,
    /// `P <= alpha` (rejection).
    pub r: bool,
}

impl Indicators {
    /// `U = C - S + 1`: one when the level is handed on (p-value discarded
    /// or below lambda), zero when it is spent.
    #[inline]
    pub fn u(&self) -> bool {
        self.c || !self.s
    }

    /// `S - C`: the level of this hypothesis counts against the budget.
    #[inline]
    pub fn spends(&self) -> bool {
        self.s && !self.c
    }

    #[inline]
    pub fn u_value(&self) -> f64 {
        if self.u() {
            1.0
        } else {
            0.0
        }
    }
}

/// Threshold indicators of `p` against `tau`, `lambda` and `alpha`.
pub fn compute_indicators(p: f64, tau: f64, lambda: f64, alpha: f64) -> Result<Indicators> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain {
            what: "p-value must lie in [0, 1]",
            value: p,
        });
    }
    Ok(Indicators {
        s: p <= tau,
        c: p <= lambda,
        r: p <= alpha,
    })
}

/// Check `0 <= lambda < tau <= 1` with the configured minimum gap.
pub(crate) fn check_tau_lambda(tau: f64, lambda: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Domain {
            what: "tau must lie in (0, 1]",
            value: tau,
        });
    }
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::Domain {
            what: "lambda must lie in [0, 1)",
            value: lambda,
        });
    }
    if tau - lambda < MIN_GAP {
        return Err(Error::Domain {
            what: "tau - lambda must be at least 1e-6",
            value: tau - lambda,
        });
    }
    Ok(())
}

/// Smallest accepted `tau - lambda`.
pub const MIN_GAP: f64 = 1e-6;

/// One hypothesis of the stream: its thresholds, conflict set and, once
/// known, its p-value and level.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisRecord {
    index: usize,
    tau: f64,
    lambda: f64,
    conflict_set: Vec<usize>,
    p_value: Option<f64>,
    level: Option<f64>,
}

impl HypothesisRecord {
    pub fn new(index: usize, tau: f64, lambda: f64, mut conflict_set: Vec<usize>) -> Result<Self> {
        if index == 0 {
            return Err(Error::UnknownIndex(0));
        }
        check_tau_lambda(tau, lambda)?;
        conflict_set.sort_unstable();
        conflict_set.dedup();
        if let Some(&bad) = conflict_set.iter().find(|&&j| j == 0 || j >= index) {
            return Err(Error::InvalidConflict {
                index,
                conflict: bad,
            });
        }
        Ok(Self {
            index,
            tau,
            lambda,
            conflict_set,
            p_value: None,
            level: None,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gap(&self) -> f64 {
        self.tau - self.lambda
    }

    pub fn conflict_set(&self) -> &[usize] {
        &self.conflict_set
    }

    pub fn p_value(&self) -> Option<f64> {
        self.p_value
    }

    pub fn level(&self) -> Option<f64> {
        self.level
    }

    /// Set the level once; a second call is rejected.
    pub fn set_level(&mut self, level: f64) -> Result<()> {
        if self.level.is_some() {
            return Err(Error::InvalidConfig(format!(
                "level of hypothesis {} is already fixed",
                self.index
            )));
        }
        if !(level >= 0.0 && level.is_finite()) {
            return Err(Error::Domain {
                what: "level must be finite and nonnegative",
                value: level,
            });
        }
        self.level = Some(level);
        Ok(())
    }

    pub fn set_p_value(&mut self, p: f64) -> Result<()> {
        if self.p_value.is_some() {
            return Err(Error::DuplicateObservation(self.index));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain {
                what: "p-value must lie in [0, 1]",
                value: p,
            });
        }
        self.p_value = Some(p);
        Ok(())
    }

    /// Indicators of the recorded p-value against the recorded level.
    pub fn indicators(&self) -> Option<Indicators> {
        let p = self.p_value?;
        let level = self.level?;
        compute_indicators(p, self.tau, self.lambda, level).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_examples() {
        let ind = compute_indicators(0.9, 0.8, 0.16, 0.05).unwrap();
        assert_eq!((ind.s, ind.c, ind.r, ind.u()), (false, false, false, true));
        let ind = compute_indicators(0.10, 0.8, 0.16, 0.05).unwrap();
        assert_eq!((ind.s, ind.c, ind.r, ind.u()), (true, true, false, true));
        let ind = compute_indicators(0.3, 0.8, 0.16, 0.05).unwrap();
        assert_eq!((ind.s, ind.c, ind.r, ind.u()), (true, false, false, false));
    }

    #[test]
    fn thresholds_are_closed() {
        let ind = compute_indicators(0.16, 0.8, 0.16, 0.16).unwrap();
        assert!(ind.s && ind.c && ind.r);
        let ind = compute_indicators(0.8, 0.8, 0.16, 0.05).unwrap();
        assert!(ind.s && !ind.c);
    }

    #[test]
    fn p_outside_unit_interval_is_rejected() {
        assert!(matches!(
            compute_indicators(1.2, 0.8, 0.16, 0.05),
            Err(Error::Domain { .. })
        ));
        assert!(compute_indicators(-0.1, 0.8, 0.16, 0.05).is_err());
        assert!(compute_indicators(f64::NAN, 0.8, 0.16, 0.05).is_err());
    }

    #[test]
    fn record_level_is_write_once() {
        let mut rec = HypothesisRecord::new(3, 0.8, 0.16, vec![2, 1, 2]).unwrap();
        assert_eq!(rec.conflict_set(), &[1, 2]);
        rec.set_level(0.01).unwrap();
        assert!(rec.set_level(0.02).is_err());
        assert_eq!(rec.level(), Some(0.01));
        rec.set_p_value(0.005).unwrap();
        assert!(rec.indicators().unwrap().r);
        assert!(matches!(
            rec.set_p_value(0.5),
            Err(Error::DuplicateObservation(3))
        ));
    }

    #[test]
    fn record_validates_parameters() {
        assert!(HypothesisRecord::new(2, 0.5, 0.5, vec![]).is_err());
        assert!(HypothesisRecord::new(2, 0.8, 0.16, vec![2]).is_err());
        assert!(HypothesisRecord::new(2, 1.1, 0.16, vec![]).is_err());
    }
}
