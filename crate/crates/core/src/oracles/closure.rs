//! Closed ADDIS-Graph by explicit intersection tests.
//!
//! For I ⊆ {1..n} and i ∈ I the intersection-test level is
//!
//! ```text
//! α_i^I = (τ_i−λ_i) ( αγ_i + Σ_{j∈I, j<i−L_i} g_{j,i} U_j α_j^I/(τ_j−λ_j)
//!                           + Σ_{j∉I, j<i}     g_{j,i}     α_j^{I∪{j}}/(τ_j−λ_j) )
//! ```
//!
//! α_i^I only depends on I ∩ {1..i−1}, so all levels fit in a table with
//! 2^{i−1} entries per index. The closed level of i is α_i^{I_i} with
//! I_i = {j < i : P_j > α_j^{I_j}} ∪ {i}.

use crate::error::{Error, Result};
use crate::indicators::compute_indicators;
use crate::schedule::WeightMatrix;

pub const CLOSURE_HORIZON_CAP: usize = 10;

/// Lag-form closed-graph setup with raw (conflict-unaware) weights g.
#[derive(Debug, Clone)]
pub struct ClosureProblem {
    pub alpha: f64,
    /// γ_1..γ_n.
    pub gamma: Vec<f64>,
    pub weights: WeightMatrix,
    /// lags[i-1] = L_i.
    pub lags: Vec<usize>,
    pub tau: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl ClosureProblem {
    pub fn horizon(&self) -> usize {
        self.gamma.len()
    }

    fn validate(&self, cap: usize) -> Result<()> {
        let n = self.horizon();
        if n > cap {
            return Err(Error::HorizonTooLarge { n, cap });
        }
        if self.lags.len() != n || self.tau.len() != n || self.lambda.len() != n || self.weights.horizon() < n {
            return Err(Error::InvalidConfig("closure problem fields must all cover n indices".into()));
        }
        for (k, &l) in self.lags.iter().enumerate() {
            if l > k {
                return Err(Error::InvalidConfig(format!("lag {l} of hypothesis {} reaches before index 1", k + 1)));
            }
        }
        Ok(())
    }
}

/// α_i^I for every i and every I ∩ {1..i−1}.
#[derive(Debug, Clone)]
pub struct IntersectionTestTable {
    /// tilde[i-1][mask] = α_i^I/(τ_i−λ_i), bit k of mask ⇔ k+1 ∈ I.
    tilde: Vec<Vec<f64>>,
    gaps: Vec<f64>,
}

impl IntersectionTestTable {
    /// Build all levels given the U_j = C_j − S_j + 1 indicators.
    pub fn build(problem: &ClosureProblem, u: &[bool]) -> Result<Self> {
        problem.validate(CLOSURE_HORIZON_CAP)?;
        Self::build_unchecked(problem, u)
    }

    fn build_unchecked(problem: &ClosureProblem, u: &[bool]) -> Result<Self> {
        let n = problem.horizon();
        if u.len() < n {
            return Err(Error::InvalidConfig("indicator feed shorter than horizon".into()));
        }
        let mut tilde: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 1..=n {
            let window = i - problem.lags[i - 1];
            let mut row = vec![0.0; 1 << (i - 1)];
            for (mask, slot) in row.iter_mut().enumerate() {
                let mut acc = problem.alpha * problem.gamma[i - 1];
                for j in 1..i {
                    let prior = tilde[j - 1][mask & ((1 << (j - 1)) - 1)];
                    let member = mask >> (j - 1) & 1 == 1;
                    let factor = if !member {
                        1.0
                    } else if j < window && u[j - 1] {
                        1.0
                    } else {
                        0.0
                    };
                    acc += factor * problem.weights.get(j, i) * prior;
                }
                *slot = acc;
            }
            tilde.push(row);
        }
        let gaps = problem.tau.iter().zip(&problem.lambda).map(|(t, l)| t - l).collect();
        Ok(Self { tilde, gaps })
    }

    pub fn horizon(&self) -> usize {
        self.gaps.len()
    }

    /// α_i^I; `members` lists I ∩ {1..i−1} (i itself is implied).
    pub fn level(&self, i: usize, members: &[usize]) -> f64 {
        let mask = members.iter().filter(|&&j| j < i).fold(0usize, |m, &j| m | 1 << (j - 1));
        self.gaps[i - 1] * self.tilde[i - 1][mask]
    }

    fn level_mask(&self, i: usize, mask: usize) -> f64 {
        self.gaps[i - 1] * self.tilde[i - 1][mask & ((1 << (i - 1)) - 1)]
    }
}

/// Closed levels α_i^{I_i} for the given p-values.
pub fn closure_oracle(problem: &ClosureProblem, p_values: &[f64]) -> Result<Vec<f64>> {
    closure_oracle_capped(problem, p_values, CLOSURE_HORIZON_CAP)
}

pub fn closure_oracle_capped(problem: &ClosureProblem, p_values: &[f64], cap: usize) -> Result<Vec<f64>> {
    problem.validate(cap)?;
    let n = problem.horizon();
    if p_values.len() < n {
        return Err(Error::InvalidConfig("fewer p-values than hypotheses".into()));
    }
    let u = (0..n)
        .map(|k| compute_indicators(p_values[k], problem.tau[k], problem.lambda[k], problem.alpha).map(|ind| ind.u()))
        .collect::<Result<Vec<bool>>>()?;
    let table = IntersectionTestTable::build_unchecked(problem, &u)?;
    let mut accepted = 0usize;
    let mut levels = Vec::with_capacity(n);
    for i in 1..=n {
        let level = table.level_mask(i, accepted);
        if p_values[i - 1] > level {
            accepted |= 1 << (i - 1);
        }
        levels.push(level);
    }
    Ok(levels)
}
