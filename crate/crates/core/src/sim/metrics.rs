//! Error-rate and power estimates over trials.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::NeumaierSum;

/// Counts of one trial: |V|, |R|, number of alternatives and rejected
/// alternatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct TrialSummary {
    pub false_rejections: usize,
    pub rejections: usize,
    pub alternatives: usize,
    pub true_rejections: usize,
}

impl TrialSummary {
    pub fn from_decisions(rejected: &[bool], alternative: &[bool]) -> Self {
        let mut s = TrialSummary::default();
        for (&r, &a) in rejected.iter().zip(alternative) {
            s.rejections += r as usize;
            s.alternatives += a as usize;
            s.true_rejections += (r && a) as usize;
            s.false_rejections += (r && !a) as usize;
        }
        s
    }

    /// Rejected fraction of alternatives; `None` without alternatives.
    pub fn power(&self) -> Option<f64> {
        (self.alternatives > 0).then(|| self.true_rejections as f64 / self.alternatives as f64)
    }

    pub fn fdp(&self) -> f64 {
        self.false_rejections as f64 / self.rejections.max(1) as f64
    }
}

/// Monte Carlo estimates; SEs are sample-sd/√trials (binomial for FWER).
/// mFDR is Σ|V| / (Σ|R| ∨ 1) over trials.
/// Power averages only over trials with at least one alternative
/// (`power_trials`), and is NaN if there are none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub trials: usize,
    pub fwer: f64,
    pub fwer_se: f64,
    pub pfer: f64,
    pub pfer_se: f64,
    pub power: f64,
    pub power_se: f64,
    pub power_trials: usize,
    pub fdr: f64,
    pub fdr_se: f64,
    pub mfdr: f64,
}

fn mean_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let n = xs.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = xs.clone().collect::<NeumaierSum>().total() / n as f64;
    if n == 1 {
        return (mean, 0.0, 1);
    }
    let ss = xs.map(|x| (x - mean) * (x - mean)).collect::<NeumaierSum>().total();
    let sd = (ss / (n - 1) as f64).sqrt();
    (mean, sd / (n as f64).sqrt(), n)
}

pub fn metrics(outcomes: &[TrialSummary]) -> Result<Metrics> {
    if outcomes.is_empty() {
        return Err(Error::EmptyOutcomeSet);
    }
    let n = outcomes.len();
    let fwer = outcomes.iter().filter(|o| o.false_rejections > 0).count() as f64 / n as f64;
    let (pfer, pfer_se, _) = mean_se(outcomes.iter().map(|o| o.false_rejections as f64));
    let (power, power_se, power_trials) = mean_se(outcomes.iter().filter_map(TrialSummary::power));
    let (fdr, fdr_se, _) = mean_se(outcomes.iter().map(TrialSummary::fdp));
    let total_v: usize = outcomes.iter().map(|o| o.false_rejections).sum();
    let total_r: usize = outcomes.iter().map(|o| o.rejections).sum();
    Ok(Metrics {
        trials: n,
        fwer,
        fwer_se: (fwer * (1.0 - fwer) / n as f64).sqrt(),
        pfer,
        pfer_se,
        power,
        power_se,
        power_trials,
        fdr,
        fdr_se,
        mfdr: total_v as f64 / total_r.max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(false_rejections: usize, rejections: usize) -> TrialSummary {
        TrialSummary {
            false_rejections,
            rejections,
            ..Default::default()
        }
    }

    #[test]
    fn no_false_rejections() {
        let m = metrics(&[v(0, 2), v(0, 0)]).unwrap();
        assert_eq!((m.fwer, m.pfer, m.fwer_se), (0.0, 0.0, 0.0));
    }

    #[test]
    fn fwer_and_pfer_averages() {
        let m = metrics(&[v(0, 0), v(1, 1), v(2, 2), v(0, 0)]).unwrap();
        assert_eq!(m.fwer, 0.5);
        assert_eq!(m.pfer, 0.75);
        assert!((m.fwer_se - (0.25f64 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fdr_differs_from_mfdr() {
        let m = metrics(&[v(1, 1), v(0, 0)]).unwrap();
        assert_eq!(m.fdr, 0.5);
        assert_eq!(m.mfdr, 1.0);
    }

    #[test]
    fn power_skips_trials_without_alternatives() {
        let a = TrialSummary::from_decisions(&[true, false, true], &[true, true, false]);
        assert_eq!(a.power(), Some(0.5));
        assert_eq!(a.false_rejections, 1);
        let none = TrialSummary::from_decisions(&[true], &[false]);
        let m = metrics(&[a, none]).unwrap();
        assert_eq!(m.power, 0.5);
        assert_eq!(m.power_trials, 1);
        assert!(metrics(&[none]).unwrap().power.is_nan());
    }

    #[test]
    fn empty_input() {
        assert_eq!(metrics(&[]), Err(Error::EmptyOutcomeSet));
    }
}
