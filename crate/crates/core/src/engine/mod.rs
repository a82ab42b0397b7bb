//! Online level-assignment engines.
//!
//! An [`Engine`] is a sequential state machine: hypotheses are registered
//! strictly in index order (each registration issues the level), p-values
//! may be reported in any order. Levels are computed in pull form at
//! registration time from the indicators of non-conflicting predecessors
//! only, so a level never depends on an outcome inside its conflict set.

mod snapshot;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::alpha_c::{alpha_c_batch, CorrModel, EmpiricalSamples};
use crate::error::{Error, Result};
use crate::gamma::{GammaSpec, GammaTable};
use crate::indicators::{check_tau_lambda, compute_indicators, HypothesisRecord, Indicators};
use crate::ledger::{LedgerEntry, TrajectoryLedger};
use crate::schedule::{lemma1_weight, Alg1Row, WeightRule, WeightTable, DEFAULT_HORIZON_CAP};

pub use snapshot::SNAPSHOT_HEADER;

/// Blocked mass above which a renormalized row is treated as degenerate.
const DEGENERATE_EPS: f64 = 1e-15;

/// Level-assignment rule.
#[derive(Debug, Clone, PartialEq)]
pub enum Procedure {
    /// ADDIS-Spending under local dependence (lag form).
    SpendingLocal,
    /// ADDIS-Graph with conflict-adjusted weights g*.
    GraphConf { rule: WeightRule },
    /// ADDIS-Graph over telescoping weights with blocked mass rerouted (lag form).
    GraphConfU,
    /// Closed ADDIS-Spending (lag form).
    ClosedSpending,
    /// Closed ADDIS-Graph (lag form); `rule` gives the base weights g.
    ClosedGraph { rule: WeightRule },
    /// Adaptive-Graph exploiting the joint null distribution of batches.
    AdaptiveCorr { rule: WeightRule, model: CorrModel },
    /// FDR-ADDIS-Graph with initial wealth W₀ and reward weights.
    FdrGraph { w0: f64, rule: WeightRule, rewards: WeightRule },
}

impl Procedure {
    pub fn name(&self) -> &'static str {
        match self {
            Procedure::SpendingLocal => "spending-local",
            Procedure::GraphConf { .. } => "graph-conf",
            Procedure::GraphConfU => "graph-conf-u",
            Procedure::ClosedSpending => "closed-spending",
            Procedure::ClosedGraph { .. } => "closed-graph",
            Procedure::AdaptiveCorr { .. } => "adaptive-corr",
            Procedure::FdrGraph { .. } => "fdr-graph",
        }
    }

    /// Whether the procedure only accepts lag-form conflict sets.
    pub fn needs_lags(&self) -> bool {
        match self {
            Procedure::SpendingLocal
            | Procedure::GraphConfU
            | Procedure::ClosedSpending
            | Procedure::ClosedGraph { .. } => true,
            Procedure::GraphConf { rule } => rule.is_data_dependent(),
            _ => false,
        }
    }

    fn primary_rule(&self) -> Option<&WeightRule> {
        match self {
            Procedure::GraphConf { rule }
            | Procedure::ClosedGraph { rule }
            | Procedure::AdaptiveCorr { rule, .. }
            | Procedure::FdrGraph { rule, .. } => Some(rule),
            _ => None,
        }
    }

    fn primary_rule_mut(&mut self) -> Option<&mut WeightRule> {
        match self {
            Procedure::GraphConf { rule }
            | Procedure::ClosedGraph { rule }
            | Procedure::AdaptiveCorr { rule, .. }
            | Procedure::FdrGraph { rule, .. } => Some(rule),
            _ => None,
        }
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        match self {
            Procedure::GraphConf { rule } | Procedure::ClosedGraph { rule } => write!(f, " rule={rule}"),
            Procedure::AdaptiveCorr { rule, model } => {
                write!(f, " rule={rule}")?;
                match model {
                    CorrModel::Equicorrelated { rho } => write!(f, " rho={rho}"),
                    CorrModel::Empirical(s) => write!(f, " samples={}", s.source().unwrap_or("<inline>")),
                }
            }
            Procedure::FdrGraph { w0, rule, rewards } => write!(f, " w0={w0} rule={rule} rewards={rewards}"),
            _ => Ok(()),
        }
    }
}

impl FromStr for Procedure {
    type Err = Error;

    /// `<name> [key=value ...]`; keys are `rule`, `rewards`, `w0`, `rho` and
    /// `samples`.
    fn from_str(s: &str) -> Result<Self> {
        let mut tokens = s.split_whitespace();
        let name = tokens
            .next()
            .ok_or_else(|| Error::InvalidConfig("empty procedure".into()))?;
        let mut rule = None;
        let mut rewards = None;
        let mut w0 = None;
        let mut model = None;
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("expected key=value, got '{tok}'")))?;
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|e| Error::InvalidConfig(format!("bad value for {k}: {e}")))
            };
            match k {
                "rule" => rule = Some(v.parse::<WeightRule>()?),
                "rewards" => rewards = Some(v.parse::<WeightRule>()?),
                "w0" => w0 = Some(num(v)?),
                "rho" => model = Some(CorrModel::equicorrelated(num(v)?)?),
                "samples" => model = Some(CorrModel::Empirical(Arc::new(EmpiricalSamples::load(v)?))),
                _ => return Err(Error::InvalidConfig(format!("unknown procedure option '{k}'"))),
            }
        }
        let proc = match name {
            "spending-local" => Procedure::SpendingLocal,
            "graph-conf" => Procedure::GraphConf {
                rule: rule.take().unwrap_or(WeightRule::Renormalized),
            },
            "graph-conf-u" => Procedure::GraphConfU,
            "closed-spending" => Procedure::ClosedSpending,
            "closed-graph" => Procedure::ClosedGraph {
                rule: rule.take().unwrap_or(WeightRule::ShiftedGamma),
            },
            "adaptive-corr" => Procedure::AdaptiveCorr {
                rule: rule.take().unwrap_or(WeightRule::Renormalized),
                model: model
                    .take()
                    .ok_or_else(|| Error::InvalidConfig("adaptive-corr needs rho= or samples=".into()))?,
            },
            "fdr-graph" => {
                let rule = rule.take().unwrap_or(WeightRule::Renormalized);
                Procedure::FdrGraph {
                    w0: w0
                        .take()
                        .ok_or_else(|| Error::InvalidConfig("fdr-graph needs w0=".into()))?,
                    rewards: rewards.take().unwrap_or_else(|| rule.clone()),
                    rule,
                }
            }
            other => return Err(Error::InvalidConfig(format!("unknown procedure '{other}'"))),
        };
        if rule.is_some() || rewards.is_some() || w0.is_some() || model.is_some() {
            return Err(Error::InvalidConfig(format!("option not applicable to '{name}'")));
        }
        Ok(proc)
    }
}

/// Study-level configuration of an engine.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Overall level α.
    pub alpha: f64,
    pub gamma: GammaSpec,
    pub procedure: Procedure,
    /// Largest index for rerouted weights.
    pub horizon_cap: usize,
}

impl EngineConfig {
    pub fn new(alpha: f64, gamma: GammaSpec, procedure: Procedure) -> Self {
        Self {
            alpha,
            gamma,
            procedure,
            horizon_cap: DEFAULT_HORIZON_CAP,
        }
    }
}

/// Registration of the next hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub tau: f64,
    pub lambda: f64,
    /// Conflict set 𝒳_i (earlier indices).
    pub conflicts: Vec<usize>,
}

impl Registration {
    pub fn new(tau: f64, lambda: f64, conflicts: Vec<usize>) -> Self {
        Self { tau, lambda, conflicts }
    }
}

/// Result of reporting a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub index: usize,
    pub indicators: Indicators,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Event {
    Register { reg: Registration, level: f64 },
    Observe { index: usize, p: f64 },
    Finalize,
    Weights(Arc<WeightTable>),
}

#[derive(Debug, Clone)]
struct Rec {
    tau: f64,
    lambda: f64,
    gap: f64,
    conflicts: Vec<usize>,
    lag: Option<usize>,
    /// Last index whose conflict set contains this one (itself if none).
    release: usize,
    level: f64,
    /// Level over gap; for the FDR engine the unclipped α̂ over gap.
    tilde: f64,
    p: Option<f64>,
    ind: Option<Indicators>,
}

/// Online testing engine for one stream of hypotheses.
#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    /// Procedure before any weight replacement, for snapshots.
    initial_procedure: Procedure,
    gamma: GammaTable,
    recs: Vec<Rec>,
    observed_prefix: usize,
    /// spend_prefix[m] = Σ_{k≤m} (S_k − C_k) for m ≤ observed_prefix.
    spend_prefix: Vec<usize>,
    /// closed_prefix[m] = Σ_{k≤m} (S_k − max(R_k, C_k)).
    closed_prefix: Vec<usize>,
    min_rejection: Option<usize>,
    alg1: Vec<Option<Alg1Row>>,
    /// Batches as (start, end) for the correlation engine.
    batches: Vec<(usize, usize)>,
    alpha_c: Vec<Option<f64>>,
    frozen_batches: usize,
    degenerate_rows: Vec<usize>,
    lint_warned: bool,
    events: Vec<Event>,
    finalized: bool,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        let alpha = config.alpha;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain {
                what: "overall level must lie in (0, 1)",
                value: alpha,
            });
        }
        match &config.procedure {
            Procedure::SpendingLocal | Procedure::GraphConfU | Procedure::ClosedSpending => {
                config.gamma.check_nonincreasing(0)?;
            }
            Procedure::GraphConf { rule } => {
                if *rule == WeightRule::Algorithm1 {
                    return Err(Error::InvalidConfig("use graph-conf-u for algorithm1 weights".into()));
                }
                if *rule == WeightRule::Lemma1 {
                    config.gamma.check_nonincreasing(0)?;
                }
            }
            Procedure::ClosedGraph { rule } | Procedure::AdaptiveCorr { rule, .. } => {
                if rule.is_data_dependent() {
                    return Err(Error::InvalidConfig(format!(
                        "{} does not support '{rule}' weights",
                        config.procedure.name()
                    )));
                }
            }
            Procedure::FdrGraph { w0, rule, rewards } => {
                if !(*w0 > 0.0 && *w0 <= alpha) {
                    return Err(Error::InvalidW0 { w0: *w0, alpha });
                }
                if rule.is_data_dependent() || rewards.is_data_dependent() {
                    return Err(Error::InvalidConfig("fdr-graph needs data-independent weights".into()));
                }
            }
        }
        Ok(Self {
            gamma: GammaTable::new(config.gamma.clone()),
            initial_procedure: config.procedure.clone(),
            config,
            recs: Vec::new(),
            observed_prefix: 0,
            spend_prefix: vec![0],
            closed_prefix: vec![0],
            min_rejection: None,
            alg1: Vec::new(),
            batches: Vec::new(),
            alpha_c: Vec::new(),
            frozen_batches: 0,
            degenerate_rows: Vec::new(),
            lint_warned: false,
            events: Vec::new(),
            finalized: false,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Number of registered hypotheses.
    pub fn len(&self) -> usize {
        self.recs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recs.is_empty()
    }

    /// Length of the fully observed prefix 1..=m.
    pub fn observed_prefix(&self) -> usize {
        self.observed_prefix
    }

    pub fn level(&self, i: usize) -> Result<f64> {
        Ok(self.rec(i)?.level)
    }

    pub fn levels(&self) -> Vec<f64> {
        self.recs.iter().map(|r| r.level).collect()
    }

    /// Unclipped α̂_i of the FDR engine; the level itself otherwise.
    pub fn unclipped_level(&self, i: usize) -> Result<f64> {
        let r = self.rec(i)?;
        Ok(r.tilde * r.gap)
    }

    pub fn indicators(&self, i: usize) -> Result<Option<Indicators>> {
        Ok(self.rec(i)?.ind)
    }

    pub fn alpha_c(&self, i: usize) -> Result<Option<f64>> {
        self.rec(i)?;
        Ok(self.alpha_c.get(i - 1).copied().flatten())
    }

    /// Rows whose renormalization was degenerate (all future mass blocked).
    pub fn degenerate_rows(&self) -> &[usize] {
        &self.degenerate_rows
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    /// Hypothesis record of index i.
    pub fn hypothesis(&self, i: usize) -> Result<HypothesisRecord> {
        let r = self.rec(i)?;
        let mut h = HypothesisRecord::new(i, r.tau, r.lambda, r.conflicts.clone())?;
        h.set_level(r.level)?;
        if let Some(p) = r.p {
            h.set_p_value(p)?;
        }
        Ok(h)
    }

    fn rec(&self, i: usize) -> Result<&Rec> {
        if i == 0 {
            return Err(Error::UnknownIndex(i));
        }
        self.recs.get(i - 1).ok_or(Error::UnknownIndex(i))
    }

    #[inline]
    fn r(&self, i: usize) -> &Rec {
        &self.recs[i - 1]
    }

    /// j ∈ 𝒳_i, for registered i.
    #[inline]
    fn conflicts(&self, j: usize, i: usize) -> bool {
        self.r(j).release >= i
    }

    fn need(&self, i: usize, j: usize) -> Result<Indicators> {
        self.r(j).ind.ok_or(Error::MissingIndicator { index: i, needed: j })
    }

    fn need_prefix(&self, i: usize, m: usize) -> Result<()> {
        if self.observed_prefix >= m {
            Ok(())
        } else {
            Err(Error::MissingIndicator {
                index: i,
                needed: self.observed_prefix + 1,
            })
        }
    }

    /// t(j) = 1 + Σ_{k<j} (S_k − C_k); needs the observed prefix j − 1.
    #[inline]
    fn spend_counter(&self, j: usize) -> usize {
        1 + self.spend_prefix[j - 1]
    }

    /// Register the next hypothesis and issue its level.
    pub fn register(&mut self, reg: Registration) -> Result<f64> {
        let i = self.recs.len() + 1;
        check_tau_lambda(reg.tau, reg.lambda)?;
        let mut set = reg.conflicts.clone();
        set.sort_unstable();
        set.dedup();
        if let Some(&bad) = set.iter().find(|&&j| j == 0 || j >= i) {
            return Err(Error::InvalidConflict { index: i, conflict: bad });
        }
        if i > 1 {
            let prev = &self.r(i - 1).conflicts;
            if let Some(&j) = set.iter().find(|&&j| j < i - 1 && prev.binary_search(&j).is_err()) {
                return Err(Error::NonMonotoneConflicts { j, k: i - 1, i });
            }
        }
        let lag = match set.first() {
            None => Some(0),
            Some(&first) if first == i - set.len() => Some(set.len()),
            Some(_) => None,
        };
        if lag.is_none() && self.config.procedure.needs_lags() {
            return Err(Error::NonContiguousSuffix { index: i });
        }
        if matches!(self.config.procedure, Procedure::GraphConfU) && i > self.config.horizon_cap {
            return Err(Error::HorizonExceeded {
                requested: i,
                cap: self.config.horizon_cap,
            });
        }
        let mut new_batch = false;
        if let Procedure::AdaptiveCorr { .. } = self.config.procedure {
            if reg.tau != 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "correlation-exploiting engine needs tau = 1 (hypothesis {i})"
                )));
            }
            match (lag, self.batches.last()) {
                (Some(0), _) => new_batch = true,
                (Some(l), Some(&(start, _))) if i - l == start => {
                    if self.r(start).lambda != reg.lambda {
                        return Err(Error::InvalidConfig(format!(
                            "lambda must be constant within a batch (hypothesis {i})"
                        )));
                    }
                }
                _ => return Err(Error::NotBatchForm { index: i }),
            }
        }
        self.gamma.ensure(2 * i + 2)?;

        let rec = Rec {
            tau: reg.tau,
            lambda: reg.lambda,
            gap: reg.tau - reg.lambda,
            conflicts: set,
            lag,
            release: i,
            level: 0.0,
            tilde: 0.0,
            p: None,
            ind: None,
        };
        let saved_releases: Vec<(usize, usize)> = rec.conflicts.iter().map(|&j| (j, self.r(j).release)).collect();
        for &j in &rec.conflicts {
            self.recs[j - 1].release = i;
        }
        self.recs.push(rec);
        self.alg1.push(None);
        self.alpha_c.push(None);
        if new_batch {
            self.batches.push((i, i));
        } else if let Some(b) = self.batches.last_mut() {
            if matches!(self.config.procedure, Procedure::AdaptiveCorr { .. }) {
                b.1 = i;
            }
        }

        match self.compute_level(i, new_batch) {
            Ok((level, tilde)) => {
                let r = &mut self.recs[i - 1];
                r.level = level;
                r.tilde = tilde;
                self.events.push(Event::Register { reg, level });
                Ok(level)
            }
            Err(e) => {
                // Roll back so the engine stays usable.
                self.recs.pop();
                self.alg1.pop();
                self.alpha_c.pop();
                for (j, rel) in saved_releases {
                    self.recs[j - 1].release = rel;
                }
                if new_batch {
                    self.batches.pop();
                } else if let Some(b) = self.batches.last_mut() {
                    if matches!(self.config.procedure, Procedure::AdaptiveCorr { .. }) {
                        b.1 = i - 1;
                    }
                }
                Err(e)
            }
        }
    }

    /// Report the p-value of a registered hypothesis.
    pub fn observe(&mut self, i: usize, p: f64) -> Result<Observation> {
        let r = self.rec(i)?;
        if r.p.is_some() {
            return Err(Error::DuplicateObservation(i));
        }
        let ind = compute_indicators(p, r.tau, r.lambda, r.level)?;
        let r = &mut self.recs[i - 1];
        r.p = Some(p);
        r.ind = Some(ind);
        if ind.r {
            self.min_rejection = Some(self.min_rejection.map_or(i, |m| m.min(i)));
        }
        while self.observed_prefix < self.recs.len() {
            let Some(ind) = self.recs[self.observed_prefix].ind else {
                break;
            };
            self.observed_prefix += 1;
            let last = self.spend_prefix[self.observed_prefix - 1];
            self.spend_prefix.push(last + ind.spends() as usize);
            let last = self.closed_prefix[self.observed_prefix - 1];
            self.closed_prefix.push(last + (ind.s && !(ind.r || ind.c)) as usize);
        }
        self.events.push(Event::Observe { index: i, p });
        Ok(Observation {
            index: i,
            indicators: ind,
            reject: ind.r,
        })
    }

    /// Close the stream: freezes the α^c values of the last batch.
    pub fn finalize(&mut self) -> Result<()> {
        if let Procedure::AdaptiveCorr { .. } = self.config.procedure {
            self.freeze_batches(self.batches.len())?;
        }
        self.finalized = true;
        self.events.push(Event::Finalize);
        Ok(())
    }

    /// Swap in a new weight table. Rows of already issued levels are frozen:
    /// any change to them is rejected.
    pub fn replace_weights(&mut self, table: WeightTable) -> Result<()> {
        let issued = self.recs.len();
        let Some(WeightRule::Table(old)) = self.config.procedure.primary_rule() else {
            return Err(Error::InvalidConfig("only table weights can be replaced".into()));
        };
        for j in 1..=issued {
            let (a, b) = (old.row(j), table.row(j));
            for &(i, w) in a.iter().chain(b) {
                if old.get(j, i) != table.get(j, i) {
                    let _ = w;
                    return Err(Error::FrozenRowViolation { j, i });
                }
            }
        }
        let table = Arc::new(table);
        if let Some(rule) = self.config.procedure.primary_rule_mut() {
            *rule = WeightRule::Table(table.clone());
        }
        self.events.push(Event::Weights(table));
        Ok(())
    }

    /// Ledger of the trajectory so far.
    pub fn ledger(&self) -> TrajectoryLedger {
        let mut ledger = TrajectoryLedger::new();
        for (k, r) in self.recs.iter().enumerate() {
            let mut e = LedgerEntry::new(k + 1, r.level, r.tau, r.lambda);
            if let Some(ind) = r.ind {
                e = e.with_indicators(ind);
            }
            if let Some(ac) = self.alpha_c[k] {
                e = e.with_alpha_c(ac);
            }
            ledger.push(e).expect("engine indices are consecutive");
        }
        ledger
    }

    fn compute_level(&mut self, i: usize, new_batch: bool) -> Result<(f64, f64)> {
        let alpha = self.config.alpha;
        let gap = self.r(i).gap;
        let gi = self.gamma.get(i);
        let proc = self.config.procedure.clone();
        match proc {
            Procedure::SpendingLocal => {
                let l = self.r(i).lag.expect("lag form checked");
                let w = i - l;
                self.need_prefix(i, w - 1)?;
                let t = 1 + l + self.spend_prefix[w - 1];
                let level = alpha * gap * self.gamma.get(t);
                Ok((level, level / gap))
            }
            Procedure::ClosedSpending => {
                let l = self.r(i).lag.expect("lag form checked");
                let w = i - l;
                self.need_prefix(i, w - 1)?;
                let mut t = 1 + self.closed_prefix[w - 1];
                for j in w..i {
                    t += !self.need(i, j)?.r as usize;
                }
                let level = alpha * gap * self.gamma.get(t);
                self.lint(i, level);
                Ok((level, level / gap))
            }
            Procedure::GraphConf { rule } => {
                let mut acc = alpha * gi;
                if rule == WeightRule::Lemma1 {
                    let w = i - self.r(i).lag.expect("lag form checked");
                    self.need_prefix(i, w - 1)?;
                    for j in 1..w {
                        if self.r(j).ind.expect("prefix observed").u() {
                            let t = self.spend_counter(j);
                            acc += lemma1_weight(&self.gamma, t, j, i) * self.r(j).tilde;
                        }
                    }
                } else {
                    self.check_table(&rule, i)?;
                    for j in 1..i {
                        if self.conflicts(j, i) {
                            continue;
                        }
                        if self.need(i, j)?.u() {
                            acc += self.static_weight(&rule, j, i) * self.r(j).tilde;
                        }
                    }
                }
                Ok((gap * acc, acc))
            }
            Procedure::GraphConfU => {
                let w = i - self.r(i).lag.expect("lag form checked");
                self.need_prefix(i, w - 1)?;
                let mut acc = alpha * gi;
                for j in 1..w {
                    if self.r(j).ind.expect("prefix observed").u() {
                        acc += self.alg1_weight(j, i, w) * self.r(j).tilde;
                    }
                }
                Ok((gap * acc, acc))
            }
            Procedure::ClosedGraph { rule } => {
                let w = i - self.r(i).lag.expect("lag form checked");
                self.need_prefix(i, w - 1)?;
                let mut acc = alpha * gi;
                for j in 1..w {
                    let ind = self.r(j).ind.expect("prefix observed");
                    // max(R, C) − S + 1
                    if ind.r || ind.c || !ind.s {
                        acc += self.closed_weight(&rule, j, i) * self.r(j).tilde;
                    }
                }
                for j in w..i {
                    if self.need(i, j)?.r {
                        acc += self.closed_weight(&rule, j, i) * self.r(j).tilde;
                    }
                }
                let level = gap * acc;
                self.lint(i, level);
                Ok((level, acc))
            }
            Procedure::AdaptiveCorr { rule, .. } => {
                if new_batch {
                    self.freeze_batches(self.batches.len() - 1)?;
                }
                let start = self.batches.last().expect("batch registered").0;
                let mut acc = alpha * gi;
                for j in 1..start {
                    let r = self.r(j);
                    let ind = r.ind.expect("frozen batches are observed");
                    let mass = if ind.c {
                        r.level
                    } else {
                        r.level - self.alpha_c[j - 1].expect("frozen")
                    };
                    let denom = 1.0 - r.lambda;
                    if mass != 0.0 {
                        acc += self.static_weight(&rule, j, i) * mass / denom;
                    }
                }
                self.check_table(&rule, i)?;
                Ok((gap * acc, acc))
            }
            Procedure::FdrGraph { w0, rule, rewards } => {
                self.check_table(&rule, i)?;
                self.check_table(&rewards, i)?;
                let mut acc = w0 * gi;
                for j in 1..i {
                    if self.conflicts(j, i) {
                        continue;
                    }
                    let ind = self.need(i, j)?;
                    if ind.u() {
                        acc += self.static_weight(&rule, j, i) * self.r(j).tilde;
                    }
                    if ind.r {
                        let k = self.rejection_flag(i, j)?;
                        let reward = if k { alpha } else { alpha - w0 };
                        acc += self.static_weight(&rewards, j, i) * reward;
                    }
                }
                let hat = gap * acc;
                Ok((hat.min(self.r(i).lambda), acc))
            }
        }
    }

    /// K_j: whether a rejection happened among 1..j−1.
    fn rejection_flag(&self, i: usize, j: usize) -> Result<bool> {
        match self.min_rejection {
            Some(m) if m < j => Ok(true),
            _ => {
                self.need_prefix(i, j - 1)?;
                Ok(false)
            }
        }
    }

    fn lint(&mut self, i: usize, level: f64) {
        if !self.lint_warned && self.r(i).lambda < level {
            log::warn!("lambda below the level at hypothesis {i}; max(R, C) exceeds C in closed updates");
            self.lint_warned = true;
        }
    }

    fn check_table(&self, rule: &WeightRule, i: usize) -> Result<()> {
        if let WeightRule::Table(t) = rule {
            for &j in &self.r(i).conflicts {
                let w = t.get(j, i);
                if w != 0.0 {
                    return Err(Error::ScheduleViolation { j, i, weight: w });
                }
            }
        }
        Ok(())
    }

    /// g*_{j,i} for the data-independent rules; j ∉ 𝒳_i.
    fn static_weight(&mut self, rule: &WeightRule, j: usize, i: usize) -> f64 {
        match rule {
            WeightRule::ShiftedGamma => self.gamma.get(i - j),
            WeightRule::Renormalized => {
                let e = self.r(j).release;
                let denom = 1.0 - self.gamma.cumulative(e - j);
                if denom <= DEGENERATE_EPS {
                    if !self.degenerate_rows.contains(&j) {
                        log::warn!("renormalization of row {j} is degenerate");
                        self.degenerate_rows.push(j);
                    }
                    0.0
                } else {
                    self.gamma.get(i - j) / denom
                }
            }
            WeightRule::UniformNext(m) => {
                let e = self.r(j).release;
                if i > e && i <= e + m {
                    1.0 / *m as f64
                } else {
                    0.0
                }
            }
            WeightRule::Table(t) => t.get(j, i),
            WeightRule::Lemma1 | WeightRule::Algorithm1 => unreachable!("data-dependent rules handled separately"),
        }
    }

    /// Base weight of the closed graph; conflicting pairs keep raw weights.
    fn closed_weight(&mut self, rule: &WeightRule, j: usize, i: usize) -> f64 {
        match rule {
            WeightRule::ShiftedGamma => self.gamma.get(i - j),
            WeightRule::Table(t) => t.get(j, i),
            other => {
                if self.conflicts(j, i) {
                    0.0
                } else {
                    self.static_weight(other, j, i)
                }
            }
        }
    }

    /// Rerouted weight g*_{j,i} with window start w = i − L_i > j.
    fn alg1_weight(&mut self, j: usize, i: usize, w: usize) -> f64 {
        let mut row = self.alg1[j - 1].take().unwrap_or_else(|| Alg1Row::new(j));
        let gamma = &self.gamma;
        let recs = &self.recs;
        let sp = &self.spend_prefix;
        let g = |l: usize, m: usize| lemma1_weight(gamma, 1 + sp[l - 1], l, m);
        let ws = |m: usize| m - recs[m - 1].lag.expect("lag form");
        row.extend(w - 1, ws, g);
        let v = row.g_star(i, w, g);
        self.alg1[j - 1] = Some(row);
        v
    }

    /// Freeze α^c for the first `upto` batches.
    fn freeze_batches(&mut self, upto: usize) -> Result<()> {
        let Procedure::AdaptiveCorr { model, .. } = &self.config.procedure else {
            return Ok(());
        };
        let model = model.clone();
        while self.frozen_batches < upto {
            let (s, e) = self.batches[self.frozen_batches];
            let mut levels = Vec::with_capacity(e - s + 1);
            let mut cands = Vec::with_capacity(e - s + 1);
            for k in s..=e {
                let ind = self.r(k).ind.ok_or(Error::BatchIncomplete { index: k })?;
                levels.push(self.r(k).level);
                cands.push(ind.c);
            }
            let ac = alpha_c_batch(&model, &levels, &cands)?;
            for (k, v) in (s..=e).zip(ac) {
                self.alpha_c[k - 1] = Some(v);
            }
            self.frozen_batches += 1;
        }
        Ok(())
    }

    /// Level left for hypotheses after the last registered one, when all
    /// later hypotheses are tested with τ = 1, λ = 0.
    ///
    /// Graph engines: α·Σ_{i>n} γ_i plus the carried mass
    /// Σ_j U_j α̃_j (1 − Σ_{i≤n} g*_{j,i}). Spending engines: α times the
    /// γ-tail after the final spending counter.
    pub fn future_level(&mut self) -> Result<f64> {
        let n = self.recs.len();
        self.need_prefix(n + 1, n)?;
        let alpha = self.config.alpha;
        let spec = self.config.gamma.clone();
        match self.config.procedure.clone() {
            Procedure::SpendingLocal => Ok(alpha * spec.tail_sum(self.spend_prefix[n])),
            Procedure::ClosedSpending => Ok(alpha * spec.tail_sum(self.closed_prefix[n])),
            Procedure::GraphConf { rule } => {
                let mut total = alpha * spec.tail_sum(n);
                for j in 1..=n {
                    if !self.r(j).ind.expect("observed").u() {
                        continue;
                    }
                    let mut used = 0.0;
                    for i in j + 1..=n {
                        if self.conflicts(j, i) {
                            continue;
                        }
                        used += match &rule {
                            WeightRule::Lemma1 => lemma1_weight(&self.gamma, self.spend_counter(j), j, i),
                            r => self.static_weight(r, j, i),
                        };
                    }
                    total += self.r(j).tilde * (1.0 - used);
                }
                Ok(total)
            }
            Procedure::GraphConfU => {
                let mut total = alpha * spec.tail_sum(n);
                for j in 1..=n {
                    if !self.r(j).ind.expect("observed").u() {
                        continue;
                    }
                    let mut used = 0.0;
                    for i in j + 1..=n {
                        let w = i - self.r(i).lag.expect("lag form");
                        if w > j {
                            used += self.alg1_weight(j, i, w);
                        }
                    }
                    total += self.r(j).tilde * (1.0 - used);
                }
                Ok(total)
            }
            other => Err(Error::InvalidConfig(format!(
                "future level is not defined for {}",
                other.name()
            ))),
        }
    }
}

/// K flags from a rejection sequence: K_1 = 0 and K_{i+1} = K_i ∨ R_i.
/// Returns K_1..=K_{n+1}.
pub fn rejection_memory(rejections: &[bool]) -> Vec<bool> {
    let mut k = Vec::with_capacity(rejections.len() + 1);
    let mut flag = false;
    k.push(flag);
    for &r in rejections {
        flag |= r;
        k.push(flag);
    }
    k
}
