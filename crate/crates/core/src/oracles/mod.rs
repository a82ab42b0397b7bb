//! Brute-force verifiers for the budget function, the closed graph and the
//! uniform-improvement weights, plus the suites behind `addis verify`.
//!
//! Nothing in here is used by the engines themselves.

pub mod budget;
pub mod closure;
pub mod improvement;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub use budget::{brute_force_budget_check, random_weights, BudgetFunction, BudgetReport};
pub use closure::{closure_oracle, ClosureProblem, IntersectionTestTable};
pub use improvement::{improvement_weight_oracle, ImprovementReport, ImprovementTables};

use crate::alpha_c::{alpha_c_monte_carlo, gaussian_alpha_c};
use crate::engine::{Engine, EngineConfig, Procedure, Registration};
use crate::error::{Error, Result};
use crate::gamma::GammaSpec;
use crate::schedule::{WeightMatrix, WeightRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Budget,
    Closure,
    Improvement,
    AlphaC,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Budget, Suite::Closure, Suite::Improvement, Suite::AlphaC];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Budget => "budget",
            Suite::Closure => "closure",
            Suite::Improvement => "improvement",
            Suite::AlphaC => "alpha-c",
        }
    }

    fn default_n(self) -> usize {
        match self {
            Suite::Budget => 12,
            Suite::Closure => 8,
            Suite::Improvement => 50,
            Suite::AlphaC => 0,
        }
    }

    fn default_seeds(self) -> usize {
        match self {
            Suite::Budget => 10,
            Suite::Closure => 50,
            Suite::Improvement => 20,
            Suite::AlphaC => 1,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown suite '{s}'")))
    }
}

/// Knobs shared by all suites; `None` picks the suite default.
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub n: Option<usize>,
    pub seeds: Option<usize>,
    /// Monte Carlo draws for the α^c suite.
    pub draws: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n: None,
            seeds: None,
            draws: 1_000_000,
            seed: 1,
        }
    }
}

/// Outcome of one suite with the worst case found.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub cases: usize,
    /// Largest observed violation margin; ≤ `tolerance` means pass.
    pub worst: f64,
    pub tolerance: f64,
    pub witness: String,
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} cases, worst {:.3e} (tolerance {:.1e}); witness {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.cases,
            self.worst,
            self.tolerance,
            self.witness
        )
    }
}

struct Worst {
    value: f64,
    witness: String,
}

impl Worst {
    fn new() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            witness: "-".into(),
        }
    }

    fn update(&mut self, value: f64, witness: impl FnOnce() -> String) {
        if value > self.value {
            self.value = value;
            self.witness = witness();
        }
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    let n = opts.n.unwrap_or(suite.default_n());
    let seeds = opts.seeds.unwrap_or(suite.default_seeds());
    match suite {
        Suite::Budget => budget_suite(n, seeds),
        Suite::Closure => closure_suite(n, seeds),
        Suite::Improvement => improvement_suite(n, seeds),
        Suite::AlphaC => alpha_c_suite(opts.draws, opts.seed),
    }
}

/// The three γ families of the simulation study.
pub fn simulation_gamma_families() -> [GammaSpec; 3] {
    [GammaSpec::log_q(), GammaSpec::power(1.6).expect("valid exponent"), GammaSpec::basel()]
}

/// max F_n(U) − α over three γ families × `seeds` random weight tables.
pub fn budget_suite(n: usize, seeds: usize) -> Result<SuiteReport> {
    const ALPHA: f64 = 0.2;
    const TOL: f64 = 1e-10;
    let mut worst = Worst::new();
    let mut cases = 0;
    for spec in simulation_gamma_families() {
        for seed in 0..seeds as u64 {
            let bf = BudgetFunction::from_spec(ALPHA, &spec, random_weights(n, seed))?;
            let rep = brute_force_budget_check(&bf)?;
            cases += 1;
            worst.update(rep.max - ALPHA, || {
                let u: String = rep.argmax.iter().map(|&b| if b { '1' } else { '0' }).collect();
                format!("gamma={spec} seed={seed} U={u} F={}", rep.max)
            });
        }
    }
    Ok(SuiteReport {
        suite: Suite::Budget,
        passed: worst.value <= TOL,
        cases,
        worst: worst.value,
        tolerance: TOL,
        witness: worst.witness,
    })
}

/// Seeded p-values mixing strong signals with uniform noise.
pub fn closure_p_values(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            if rng.random_bool(0.4) {
                0.1 * u
            } else {
                u
            }
        })
        .collect()
}

/// Closed-graph engine levels on a lag-1 stream with shifted-γ weights.
pub fn closed_graph_levels(spec: &GammaSpec, lags: &[usize], p: &[f64], alpha: f64, tau: f64, lambda: f64) -> Result<Vec<f64>> {
    let cfg = EngineConfig::new(alpha, spec.clone(), Procedure::ClosedGraph { rule: WeightRule::ShiftedGamma });
    let mut engine = Engine::new(cfg)?;
    let mut out = Vec::with_capacity(p.len());
    for (k, (&l, &pk)) in lags.iter().zip(p).enumerate() {
        let i = k + 1;
        out.push(engine.register(Registration::new(tau, lambda, (i - l..i).collect()))?);
        engine.observe(i, pk)?;
    }
    Ok(out)
}

/// |closure oracle − closed-graph engine| over `seeds` trajectories, L ≡ 1.
pub fn closure_suite(n: usize, seeds: usize) -> Result<SuiteReport> {
    const TOL: f64 = 1e-10;
    let (alpha, tau, lambda) = (0.2, 0.8, 0.16);
    let spec = GammaSpec::basel();
    let lags: Vec<usize> = (0..n).map(|k| k.min(1)).collect();
    let problem = ClosureProblem {
        alpha,
        gamma: (1..=n).map(|i| spec.value(i)).collect::<Result<_>>()?,
        weights: WeightMatrix::from_fn(n, |j, i| spec.value(i - j).unwrap_or(0.0)),
        lags: lags.clone(),
        tau: vec![tau; n],
        lambda: vec![lambda; n],
    };
    let mut worst = Worst::new();
    for seed in 0..seeds as u64 {
        let p = closure_p_values(n, seed);
        let oracle = closure_oracle(&problem, &p)?;
        let engine = closed_graph_levels(&spec, &lags, &p, alpha, tau, lambda)?;
        for (i, (a, b)) in oracle.iter().zip(&engine).enumerate() {
            worst.update((a - b).abs(), || format!("seed={seed} index={} oracle={a} engine={b}", i + 1));
        }
    }
    Ok(SuiteReport {
        suite: Suite::Closure,
        passed: worst.value <= TOL,
        cases: seeds,
        worst: worst.value,
        tolerance: TOL,
        witness: worst.witness,
    })
}

/// Random lag sequence with L_1 = 0 and L_{i+1} ≤ L_i + 1.
pub fn random_lags(n: usize, max_lag: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut lags = Vec::with_capacity(n);
    let mut prev = 0usize;
    for k in 0..n {
        let l = if k == 0 { 0 } else { rng.random_range(0..=(prev + 1).min(max_lag)) };
        lags.push(l);
        prev = l;
    }
    lags
}

/// max (g^{+,loc} − g^{+}) over random lag/indicator instances.
pub fn improvement_suite(n: usize, seeds: usize) -> Result<SuiteReport> {
    const TOL: f64 = 1e-12;
    let mut worst = Worst::new();
    for seed in 0..seeds as u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let lags = if seed % 2 == 0 {
            let b = rng.random_range(2..=10);
            (0..n).map(|k| k % b).collect()
        } else {
            random_lags(n, 10, &mut rng)
        };
        let u: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        let rep = improvement_weight_oracle(&GammaSpec::basel(), &lags, &u)?.compare();
        worst.update(rep.worst_excess, || format!("seed={seed} pair={:?}", rep.witness));
    }
    Ok(SuiteReport {
        suite: Suite::Improvement,
        passed: worst.value <= TOL,
        cases: seeds,
        worst: worst.value,
        tolerance: TOL,
        witness: worst.witness,
    })
}

/// (ρ, predecessor levels, α_j) grid for the α^c comparison.
pub fn alpha_c_grid() -> Vec<(f64, Vec<f64>, f64)> {
    let levels: [(Vec<f64>, f64); 3] = [(vec![0.05], 0.05), (vec![0.01, 0.02], 0.03), (vec![0.1, 0.05, 0.02], 0.04)];
    let mut out = Vec::new();
    for rho in [0.3, 0.5, 0.9] {
        for (pred, aj) in &levels {
            out.push((rho, pred.clone(), *aj));
        }
    }
    out
}

/// Quadrature vs Monte Carlo in units of the Monte Carlo SE, the exact
/// product at ρ = 0 (also through the quadrature path at ρ ≈ 0), and α^c ≤ α_j.
/// The reported margin is max(|z| − 3, product error − 1e-10, α^c − α_j).
pub fn alpha_c_suite(draws: usize, seed: u64) -> Result<SuiteReport> {
    let mut worst = Worst::new();
    let grid = alpha_c_grid();
    for (k, (rho, pred, aj)) in grid.iter().enumerate() {
        let q = gaussian_alpha_c(*rho, pred, *aj)?;
        let mc = alpha_c_monte_carlo(*rho, pred, *aj, draws, seed.wrapping_add(k as u64));
        let z = (q - mc.value).abs() / mc.std_error.max(1e-300);
        worst.update(z - 3.0, || format!("rho={rho} levels={pred:?} aj={aj} quad={q} mc={}±{}", mc.value, mc.std_error));
        worst.update(q - aj, || format!("alpha_c {q} above level {aj}"));
        let product = pred.iter().map(|a| 1.0 - a).product::<f64>() * aj;
        for r in [0.0, 1e-14] {
            let v = gaussian_alpha_c(r, pred, *aj)?;
            worst.update((v - product).abs() - 1e-10, || format!("rho={r} levels={pred:?} got {v} product {product}"));
        }
    }
    Ok(SuiteReport {
        suite: Suite::AlphaC,
        passed: worst.value <= 0.0,
        cases: grid.len(),
        worst: worst.value,
        tolerance: 0.0,
        witness: worst.witness,
    })
}
