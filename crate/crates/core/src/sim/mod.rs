//! Simulation harness: Gaussian batch data, engine runs, metrics and grids.
//!
//! Trial `t` of every grid point draws from the ChaCha20 stream `t` of the
//! master seed, so all procedures and parameter points see paired data and
//! results do not depend on scheduling.

pub mod data;
pub mod grid;
pub mod metrics;

use serde::Serialize;

pub use data::{generate_trial, trial_rng, TrialData};
pub use grid::{run_grid, GridSpec, GridResult, MetricsRow, SweepSpec};
pub use metrics::{metrics, Metrics, TrialSummary};

use crate::conflicts::ConflictStructure;
use crate::engine::{Engine, EngineConfig, Procedure, Registration};
use crate::error::{Error, Result};
use crate::gamma::GammaSpec;
use crate::ledger::{check_corr_condition, check_fdr_condition, check_fwer_condition, ConditionReport, TrajectoryLedger};
use crate::par;
use crate::schedule::DEFAULT_HORIZON_CAP;

/// One simulation setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub b: usize,
    pub rho: f64,
    pub pi_a: f64,
    pub mu_n: f64,
    /// Mean shift of alternatives.
    pub alt_shift: f64,
    pub trials: usize,
    pub seed: u64,
    pub alpha: f64,
    pub tau: f64,
    pub lambda: f64,
    pub gamma: GammaSpec,
    pub procedure: Procedure,
    /// Asynchronous test duration: E_i = i + e.
    pub e: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 100,
            b: 1,
            rho: 0.5,
            pi_a: 0.3,
            mu_n: -0.5,
            alt_shift: 3.0,
            trials: 1000,
            seed: 1,
            alpha: 0.2,
            tau: 0.8,
            lambda: 0.16,
            gamma: GammaSpec::basel(),
            procedure: Procedure::GraphConfU,
            e: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.b == 0 || self.n % self.b != 0 {
            return Err(Error::InvalidConfig(format!("n = {} must be a positive multiple of b = {}", self.n, self.b)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!("rho = {} outside [0, 1)", self.rho)));
        }
        if !(0.0..=1.0).contains(&self.pi_a) {
            return Err(Error::InvalidConfig(format!("pi_A = {} outside [0, 1]", self.pi_a)));
        }
        if self.mu_n > 0.0 {
            return Err(Error::InvalidConfig(format!("mu_N = {} must be ≤ 0", self.mu_n)));
        }
        Ok(())
    }

    /// Batches of size b, widened by the test duration e.
    pub fn conflicts(&self) -> Result<ConflictStructure> {
        if self.e == 0 {
            ConflictStructure::uniform_batches(self.n, self.b)
        } else {
            ConflictStructure::batches_with_duration(self.n, self.b, self.e)
        }
    }

    pub fn engine_config(&self) -> EngineConfig {
        let mut cfg = EngineConfig::new(self.alpha, self.gamma.clone(), self.procedure.clone());
        cfg.horizon_cap = cfg.horizon_cap.max(self.n).max(DEFAULT_HORIZON_CAP);
        cfg
    }
}

/// Levels and decisions of one procedure on one trial.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub levels: Vec<f64>,
    pub rejected: Vec<bool>,
    pub ledger: TrajectoryLedger,
}

/// Feed a trial through a fresh engine, registering and observing each
/// hypothesis in turn.
pub fn run_procedure(cfg: &SimConfig, conflicts: &ConflictStructure, data: &TrialData) -> Result<TrialOutcome> {
    let mut engine = Engine::new(cfg.engine_config())?;
    let mut levels = Vec::with_capacity(data.len());
    let mut rejected = Vec::with_capacity(data.len());
    for (k, &p) in data.p.iter().enumerate() {
        let i = k + 1;
        let reg = Registration::new(cfg.tau, cfg.lambda, conflicts.conflict_set(i).to_vec());
        levels.push(engine.register(reg)?);
        rejected.push(engine.observe(i, p)?.reject);
    }
    engine.finalize()?;
    Ok(TrialOutcome {
        levels,
        rejected,
        ledger: engine.ledger(),
    })
}

/// The budget condition matching a procedure.
pub fn check_condition(procedure: &Procedure, ledger: &TrajectoryLedger, alpha: f64, tol: f64) -> Result<ConditionReport> {
    match procedure {
        Procedure::FdrGraph { .. } => check_fdr_condition(ledger, alpha, tol),
        Procedure::AdaptiveCorr { .. } => check_corr_condition(ledger, alpha, tol),
        _ => check_fwer_condition(ledger, alpha, tol),
    }
}

/// Condition checks aggregated over trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionSummary {
    pub checked: usize,
    pub failures: usize,
    pub worst_excess: f64,
}

/// Metrics of one setting, plus the budget-condition summary when requested.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub metrics: Metrics,
    pub condition: Option<ConditionSummary>,
}

pub const CONDITION_TOL: f64 = 1e-10;

/// Run all trials of a setting (in parallel with the `parallel` feature).
pub fn run_point(cfg: &SimConfig, check: bool) -> Result<PointResult> {
    cfg.validate()?;
    let conflicts = cfg.conflicts()?;
    let per_trial = par::try_map_indices(cfg.trials, |t| -> Result<(TrialSummary, Option<ConditionReport>)> {
        let data = generate_trial(cfg, t as u64)?;
        let out = run_procedure(cfg, &conflicts, &data).map_err(|e| e.context(format!("trial {t}")))?;
        let report = if check {
            Some(check_condition(&cfg.procedure, &out.ledger, cfg.alpha, CONDITION_TOL)?)
        } else {
            None
        };
        Ok((TrialSummary::from_decisions(&out.rejected, &data.alternative), report))
    })?;
    let summaries: Vec<TrialSummary> = per_trial.iter().map(|x| x.0).collect();
    let condition = check.then(|| {
        per_trial.iter().filter_map(|x| x.1).fold(
            ConditionSummary {
                checked: 0,
                failures: 0,
                worst_excess: f64::NEG_INFINITY,
            },
            |acc, r| ConditionSummary {
                checked: acc.checked + 1,
                failures: acc.failures + !r.passed as usize,
                worst_excess: acc.worst_excess.max(r.worst_excess),
            },
        )
    });
    Ok(PointResult {
        metrics: metrics(&summaries)?,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::WeightRule;

    #[test]
    fn validation() {
        let bad = [
            SimConfig { n: 10, b: 3, ..Default::default() },
            SimConfig { rho: 1.0, ..Default::default() },
            SimConfig { pi_a: 1.5, ..Default::default() },
            SimConfig { mu_n: 0.5, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))), "{c:?}");
        }
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn spending_and_graph_coincide_under_independence() {
        let base = SimConfig {
            b: 1,
            trials: 50,
            pi_a: 0.5,
            ..Default::default()
        };
        let spend = SimConfig {
            procedure: Procedure::SpendingLocal,
            ..base.clone()
        };
        let a = run_point(&base, false).unwrap();
        let b = run_point(&spend, false).unwrap();
        assert_eq!(a.metrics, b.metrics);
    }

    #[test]
    fn point_with_conditions() {
        for procedure in [
            Procedure::GraphConf { rule: WeightRule::Renormalized },
            Procedure::FdrGraph {
                w0: 0.05,
                rule: WeightRule::Renormalized,
                rewards: WeightRule::Renormalized,
            },
        ] {
            let cfg = SimConfig {
                b: 5,
                trials: 40,
                alpha: 0.05,
                tau: 0.5,
                lambda: 0.25,
                procedure,
                ..Default::default()
            };
            let r = run_point(&cfg, true).unwrap();
            let c = r.condition.unwrap();
            assert_eq!((c.checked, c.failures), (40, 0));
            assert!(c.worst_excess <= CONDITION_TOL);
        }
    }

    #[test]
    fn async_conflicts() {
        let cfg = SimConfig { n: 20, e: 3, ..Default::default() };
        let c = cfg.conflicts().unwrap();
        assert_eq!(c.conflict_set(10), &[7, 8, 9]);
        assert_eq!(c.conflict_set(2), &[1]);
    }
}
