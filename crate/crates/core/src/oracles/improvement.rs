//! Share of αγ_j reaching later levels under local spending and under the
//! rerouted graph, transcribed step by step from the pseudocode.
//!
//! Both transcriptions read the else-branch update `g ← g − g⁻_{j,l}` as
//! subtracting the freshly computed g⁻_{j,i}, the only index in scope.

use crate::error::{Error, Result};
use crate::gamma::GammaTable;
use crate::gamma::GammaSpec;
use crate::schedule::{lemma1_weight, spending_counters, WeightMatrix};

pub const IMPROVEMENT_HORIZON_CAP: usize = 200;

/// Tables g^{+,loc} and g^{+}.
#[derive(Debug, Clone)]
pub struct ImprovementTables {
    pub local: WeightMatrix,
    pub graph: WeightMatrix,
}

/// Largest violation of g^{+,loc} ≤ g^{+}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImprovementReport {
    /// max over pairs of g^{+,loc}_{j,i} − g^{+}_{j,i}.
    pub worst_excess: f64,
    pub witness: (usize, usize),
}

impl ImprovementReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.worst_excess <= tol
    }
}

impl ImprovementTables {
    pub fn compare(&self) -> ImprovementReport {
        let n = self.local.horizon();
        let mut rep = ImprovementReport {
            worst_excess: f64::NEG_INFINITY,
            witness: (0, 0),
        };
        for j in 1..=n {
            for i in j + 1..=n {
                let d = self.local.get(j, i) - self.graph.get(j, i);
                if d > rep.worst_excess {
                    rep = ImprovementReport { worst_excess: d, witness: (j, i) };
                }
            }
        }
        rep
    }
}

/// Run both algorithms over telescoping base weights with t(j) = 1 + Σ_{k<j}(1 − U_k).
/// `lags[i-1]` = L_i, `u[k-1]` = U_k.
pub fn improvement_weight_oracle(spec: &GammaSpec, lags: &[usize], u: &[bool]) -> Result<ImprovementTables> {
    let n = lags.len();
    if n > IMPROVEMENT_HORIZON_CAP {
        return Err(Error::HorizonTooLarge { n, cap: IMPROVEMENT_HORIZON_CAP });
    }
    if u.len() < n {
        return Err(Error::InvalidConfig("indicator feed shorter than lags".into()));
    }
    for (k, &l) in lags.iter().enumerate() {
        if l > k {
            return Err(Error::InvalidConfig(format!("lag {l} of hypothesis {} reaches before index 1", k + 1)));
        }
    }
    spec.check_nonincreasing(2 * n + 2)?;
    let mut gamma = GammaTable::new(spec.clone());
    gamma.ensure(2 * n + 2)?;
    let spends: Vec<bool> = u[..n].iter().map(|&x| !x).collect();
    let t = spending_counters(&spends);
    let g = WeightMatrix::from_fn(n, |l, m| lemma1_weight(&gamma, t[l], l, m));
    let uf: Vec<f64> = std::iter::once(0.0).chain(u[..n].iter().map(|&x| x as u8 as f64)).collect();
    let ws = |i: usize| i - lags[i - 1];
    // d_j = min{i : i − L_i > j}; window starts are nondecreasing for lags.
    let d = |j: usize| (j + 1..=n).find(|&i| ws(i) > j).unwrap_or(n + 1);

    let mut local = WeightMatrix::zeros(n);
    let mut graph = WeightMatrix::zeros(n);
    for j in 1..=n {
        // Local spending table
        let mut gp = vec![0.0; n + 1];
        let mut gm = vec![0.0; n + 1];
        for i in j + 1..=n {
            gp[i] = g.get(j, i);
        }
        for i in j + 1..=n {
            if ws(i) <= j {
                gm[i] = gp[i];
                gp[i] = 0.0;
                for k in i + 1..=n {
                    gp[k] += gm[i] * g.get(i, k) * uf[i];
                }
            } else {
                let mut acc = 0.0;
                for l in ws(i)..i {
                    acc += g.get(l, i) * gm[l] * uf[l];
                }
                for l in ws(i)..i {
                    acc += g.get(l, i) * gp[l] * uf[l];
                }
                gm[i] = acc;
                gp[i] -= gm[i];
                for k in i + 1..=n {
                    gp[k] += gm[i] * g.get(i, k) * uf[i] + gp[i] * g.get(i, k) * uf[i];
                }
            }
        }
        for i in j + 1..=n {
            local.set(j, i, gp[i]);
        }

        // Rerouted graph table
        let dj = d(j);
        let mut gp = vec![0.0; n + 1];
        let mut gm = vec![0.0; n + 1];
        for i in j + 1..=n {
            gp[i] = g.get(j, i);
        }
        for i in j + 1..=n {
            if i < dj {
                gm[i] = gp[i];
                gp[i] = 0.0;
                for k in i + 1..=n {
                    gp[k] += gm[i] * g.get(i, k);
                }
            } else {
                let mut acc = 0.0;
                for l in ws(i)..i {
                    acc += g.get(l, i) * gm[l];
                }
                for l in ws(i)..i {
                    acc += g.get(l, i) * gp[l] * uf[l];
                }
                gm[i] = acc;
                gp[i] -= gm[i];
                for k in i + 1..=n {
                    gp[k] += gm[i] * g.get(i, k) + gp[i] * g.get(i, k) * uf[i];
                }
            }
        }
        for i in j + 1..=n {
            graph.set(j, i, gp[i]);
        }
    }
    Ok(ImprovementTables { local, graph })
}
