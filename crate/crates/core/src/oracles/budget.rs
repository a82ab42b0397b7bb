//! Exhaustive evaluation of the budget function F_n(U).
//!
//! With α̃_j = αγ_j + Σ_{k<j} g_{k,j} U_k α̃_k and spend α_j/(τ_j−λ_j) = α̃_j
//! whenever U_j = 0, F_n(U) = Σ_{j≤n} α̃_j (1 − U_j). Every U ∈ {0,1}^n is
//! enumerated by depth-first search sharing prefixes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::gamma::GammaSpec;
use crate::par;
use crate::schedule::WeightMatrix;

pub const BUDGET_HORIZON_CAP: usize = 20;

/// Inputs of F_n: level, γ_1..γ_n, weights g (or g*) and gaps τ_j − λ_j.
#[derive(Debug, Clone)]
pub struct BudgetFunction {
    pub alpha: f64,
    pub gamma: Vec<f64>,
    pub weights: WeightMatrix,
    pub gaps: Vec<f64>,
}

impl BudgetFunction {
    pub fn new(alpha: f64, gamma: Vec<f64>, weights: WeightMatrix, gaps: Vec<f64>) -> Result<Self> {
        let n = gamma.len();
        if weights.horizon() < n || gaps.len() != n {
            return Err(Error::InvalidConfig(format!(
                "budget function needs {n} gaps and an n×n weight table"
            )));
        }
        for j in 1..=n {
            let s = weights.row_sum(j);
            if s > 1.0 + 1e-12 {
                return Err(Error::InvalidConfig(format!("weight row {j} sums to {s} > 1")));
            }
        }
        if let Some(&g) = gaps.iter().find(|&&g| !(g > 0.0 && g <= 1.0)) {
            return Err(Error::Domain { what: "gap must lie in (0, 1]", value: g });
        }
        Ok(Self { alpha, gamma, weights, gaps })
    }

    /// γ_1..γ_n from a spec with unit gaps.
    pub fn from_spec(alpha: f64, spec: &GammaSpec, weights: WeightMatrix) -> Result<Self> {
        let n = weights.horizon();
        let gamma = (1..=n).map(|i| spec.value(i)).collect::<Result<Vec<_>>>()?;
        Self::new(alpha, gamma, weights, vec![1.0; n])
    }

    pub fn horizon(&self) -> usize {
        self.gamma.len()
    }

    /// Individual levels α_j = gap_j · α̃_j under a fixed U pattern.
    pub fn levels(&self, u: &[bool]) -> Vec<f64> {
        let n = self.horizon();
        let mut tilde = vec![0.0; n + 1];
        let mut out = Vec::with_capacity(n);
        for j in 1..=n {
            tilde[j] = self.tilde(j, &tilde, u);
            out.push(self.gaps[j - 1] * tilde[j]);
        }
        out
    }

    /// F_n(U).
    pub fn evaluate(&self, u: &[bool]) -> f64 {
        self.levels(u)
            .iter()
            .zip(&self.gaps)
            .zip(u)
            .filter(|(_, &uj)| !uj)
            .map(|((a, gap), _)| a / gap)
            .sum()
    }

    #[inline]
    fn tilde(&self, j: usize, tilde: &[f64], u: &[bool]) -> f64 {
        let mut acc = self.alpha * self.gamma[j - 1];
        for k in 1..j {
            if u[k - 1] {
                acc += self.weights.get(k, j) * tilde[k];
            }
        }
        acc
    }
}

/// Maximum of F_n over all patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetReport {
    pub max: f64,
    pub argmax: Vec<bool>,
    pub patterns: u64,
}

impl BudgetReport {
    pub fn certifies(&self, alpha: f64, tol: f64) -> bool {
        self.max <= alpha + tol
    }
}

struct Search<'a> {
    bf: &'a BudgetFunction,
    tilde: Vec<f64>,
    u: Vec<bool>,
    best: f64,
    best_u: Vec<bool>,
}

impl Search<'_> {
    fn run(&mut self, j: usize, spent: f64) {
        let n = self.bf.horizon();
        if j > n {
            if spent > self.best {
                self.best = spent;
                self.best_u.clone_from(&self.u);
            }
            return;
        }
        self.tilde[j] = self.bf.tilde(j, &self.tilde, &self.u);
        self.u[j - 1] = true;
        self.run(j + 1, spent);
        self.u[j - 1] = false;
        let t = self.tilde[j];
        self.run(j + 1, spent + t);
    }
}

/// Enumerate all 2^n patterns U and return the maximum of F_n.
pub fn brute_force_budget_check(bf: &BudgetFunction) -> Result<BudgetReport> {
    brute_force_budget_check_capped(bf, BUDGET_HORIZON_CAP)
}

pub fn brute_force_budget_check_capped(bf: &BudgetFunction, cap: usize) -> Result<BudgetReport> {
    let n = bf.horizon();
    if n > cap {
        return Err(Error::HorizonTooLarge { n, cap });
    }
    // Fix the first `split` indicators per work item.
    let split = n.min(6);
    let results = par::map_indices(1usize << split, |mask| {
        let mut s = Search {
            bf,
            tilde: vec![0.0; n + 1],
            u: vec![false; n],
            best: f64::NEG_INFINITY,
            best_u: Vec::new(),
        };
        let mut spent = 0.0;
        for j in 1..=split {
            s.tilde[j] = bf.tilde(j, &s.tilde, &s.u);
            let uj = mask >> (j - 1) & 1 == 1;
            s.u[j - 1] = uj;
            if !uj {
                spent += s.tilde[j];
            }
        }
        s.run(split + 1, spent);
        (s.best, s.best_u)
    });
    let (max, argmax) = results
        .into_iter()
        .fold((f64::NEG_INFINITY, Vec::new()), |acc, r| if r.0 > acc.0 { r } else { acc });
    Ok(BudgetReport { max, argmax, patterns: 1u64 << n })
}

/// Random row-substochastic weights: each row gets uniform draws scaled to a
/// random total in [0, 1], with some rows summing to exactly one.
pub fn random_weights(n: usize, seed: u64) -> WeightMatrix {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut m = WeightMatrix::zeros(n);
    for j in 1..n {
        let raw: Vec<f64> = (j + 1..=n).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let mass = if rng.random_bool(0.5) { 1.0 } else { rng.random::<f64>() };
        for (k, w) in raw.into_iter().enumerate() {
            m.set(j, j + 1 + k, w / total * mass);
        }
    }
    m
}
