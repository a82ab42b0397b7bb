//! Equicorrelated Gaussian batches and one-sided z-test p-values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::SimConfig;
use crate::error::Result;
use crate::numeric::normal_sf;

/// p-values and truth labels of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialData {
    pub p: Vec<f64>,
    pub alternative: Vec<bool>,
}

impl TrialData {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// RNG of trial `trial`: ChaCha20 keyed by the master seed, stream = trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Per batch: one common factor Z₀, then per member a label draw
/// (alternative with probability π_A) and noise ε;
/// X = √ρ·Z₀ + √(1−ρ)·ε, Z = X + 3 (alternative) or X + μ_N, P = 1 − Φ(Z).
pub fn generate_trial(cfg: &SimConfig, trial: u64) -> Result<TrialData> {
    cfg.validate()?;
    let mut rng = trial_rng(cfg.seed, trial);
    let (s, t) = (cfg.rho.sqrt(), (1.0 - cfg.rho).sqrt());
    let mut p = Vec::with_capacity(cfg.n);
    let mut alternative = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n / cfg.b {
        let z0: f64 = rng.sample(StandardNormal);
        for _ in 0..cfg.b {
            let alt = rng.random::<f64>() < cfg.pi_a;
            let eps: f64 = rng.sample(StandardNormal);
            let x = s * z0 + t * eps;
            let z = x + if alt { cfg.alt_shift } else { cfg.mu_n };
            p.push(normal_sf(z));
            alternative.push(alt);
        }
    }
    Ok(TrialData { p, alternative })
}
