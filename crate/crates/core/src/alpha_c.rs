//! Joint null tail probabilities α^c for correlated batches.
//!
//! α_j^c = P(∩_{k} {P_k > α_k} ∩ {P_j ≤ α_j}) over the in-batch k < j that
//! were not candidates. Under an equicorrelated Gaussian null with one-sided
//! z-test p-values the event factorizes given the common factor, which
//! reduces the probability to a one-dimensional integral.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numeric::{normal_cdf, normal_pdf, normal_quantile, normal_sf, GaussLegendre};

const QUAD_LIMIT: f64 = 8.0;
const QUAD_TOL: f64 = 1e-10;
/// Node counts 2^4 ..= 2^12.
const MIN_LOG_NODES: usize = 4;
const MAX_LOG_NODES: usize = 12;

/// Joint null model of one batch.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrModel {
    /// Equicorrelated standard Gaussians with correlation ρ ∈ [0, 1) and
    /// one-sided z-test p-values.
    Equicorrelated { rho: f64 },
    /// Rows of joint null p-value draws; column k is within-batch position k.
    Empirical(Arc<EmpiricalSamples>),
}

impl CorrModel {
    pub fn equicorrelated(rho: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::Domain {
                what: "correlation must lie in [0, 1)",
                value: rho,
            });
        }
        Ok(CorrModel::Equicorrelated { rho })
    }
}

/// Sampled joint null p-values for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSamples {
    width: usize,
    rows: Vec<Vec<f64>>,
    source: Option<String>,
}

impl EmpiricalSamples {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || width == 0 {
            return Err(Error::ModelUnavailable("sample file has no draws".into()));
        }
        for (k, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Parse {
                    line: k + 1,
                    msg: format!("expected {width} columns, found {}", row.len()),
                });
            }
            if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::Parse {
                    line: k + 1,
                    msg: format!("p-value {p} outside [0, 1]"),
                });
            }
        }
        Ok(Self {
            width,
            rows,
            source: None,
        })
    }

    /// Whitespace- or comma-separated rows; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: k + 1,
                    msg: e.to_string(),
                })?;
            rows.push(row);
        }
        Self::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ModelUnavailable(format!("{}: {e}", path.display())))?;
        let mut s = Self::parse(&text).map_err(|e| e.context(path.display().to_string()))?;
        s.source = Some(path.display().to_string());
        Ok(s)
    }

    /// File the samples were loaded from.
    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn draws(&self) -> usize {
        self.rows.len()
    }
}

/// α^c value with its Monte Carlo standard error (zero for quadrature).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaCEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// c(α) = Φ⁻¹(1 − α), with the limits at 0 and 1.
fn upper_point(a: f64) -> f64 {
    if a <= 0.0 {
        f64::INFINITY
    } else if a >= 1.0 {
        f64::NEG_INFINITY
    } else {
        // Φ⁻¹(1−a) = −Φ⁻¹(a) keeps precision for small a.
        -normal_quantile(a)
    }
}

fn check_level(a: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::Domain {
            what: "level must lie in [0, 1]",
            value: a,
        });
    }
    Ok(())
}

/// α_j^c for the listed history. `history` holds (within-batch position,
/// level) of the in-batch predecessors with C_k = 0; `position` is j's
/// position. Positions only matter for the empirical model.
pub fn alpha_c(model: &CorrModel, history: &[(usize, f64)], position: usize, alpha_j: f64) -> Result<AlphaCEstimate> {
    check_level(alpha_j)?;
    for &(_, a) in history {
        check_level(a)?;
    }
    if history.is_empty() {
        return Ok(AlphaCEstimate {
            value: alpha_j,
            std_error: 0.0,
        });
    }
    match model {
        CorrModel::Equicorrelated { rho } => {
            let levels: Vec<f64> = history.iter().map(|h| h.1).collect();
            let value = gaussian_alpha_c(*rho, &levels, alpha_j)?;
            Ok(AlphaCEstimate { value, std_error: 0.0 })
        }
        CorrModel::Empirical(samples) => empirical_alpha_c(samples, history, position, alpha_j),
    }
}

/// Equicorrelated Gaussian α^c by Gauss–Legendre quadrature over the
/// common factor, doubling the node count until two estimates agree.
pub fn gaussian_alpha_c(rho: f64, predecessors: &[f64], alpha_j: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain {
            what: "correlation must lie in [0, 1)",
            value: rho,
        });
    }
    if predecessors.is_empty() {
        return Ok(alpha_j);
    }
    if rho == 0.0 {
        return Ok(predecessors.iter().map(|a| 1.0 - a).product::<f64>() * alpha_j);
    }
    let s = rho.sqrt();
    let t = (1.0 - rho).sqrt();
    let cs: Vec<f64> = predecessors.iter().map(|&a| upper_point(a)).collect();
    let cj = upper_point(alpha_j);
    let f = |z: f64| {
        let mut v = normal_pdf(z);
        for &c in &cs {
            v *= normal_cdf((c - s * z) / t);
        }
        v * normal_sf((cj - s * z) / t)
    };
    let mut prev = GaussLegendre::cached_pow2(MIN_LOG_NODES).integrate(-QUAD_LIMIT, QUAD_LIMIT, f);
    let mut delta = f64::INFINITY;
    for k in MIN_LOG_NODES + 1..=MAX_LOG_NODES {
        let cur = GaussLegendre::cached_pow2(k).integrate(-QUAD_LIMIT, QUAD_LIMIT, f);
        delta = (cur - prev).abs();
        if delta < QUAD_TOL {
            return Ok(cur.clamp(0.0, alpha_j));
        }
        prev = cur;
    }
    Err(Error::QuadratureNonConvergence {
        delta,
        nodes: 1 << MAX_LOG_NODES,
    })
}

/// α^c for every member of one batch. `levels[k]` is the level of the k-th
/// member and `candidates[k]` its C flag; member k conditions on the earlier
/// members with C = 0. Running products over the quadrature nodes make this
/// O(b · nodes) instead of O(b² · nodes).
pub fn alpha_c_batch(model: &CorrModel, levels: &[f64], candidates: &[bool]) -> Result<Vec<f64>> {
    assert_eq!(levels.len(), candidates.len());
    for &a in levels {
        check_level(a)?;
    }
    let rho = match model {
        CorrModel::Equicorrelated { rho } => *rho,
        CorrModel::Empirical(_) => {
            let mut out = Vec::with_capacity(levels.len());
            let mut history = Vec::new();
            for (k, (&a, &c)) in levels.iter().zip(candidates).enumerate() {
                out.push(alpha_c(model, &history, k, a)?.value);
                if !c {
                    history.push((k, a));
                }
            }
            return Ok(out);
        }
    };
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain {
            what: "correlation must lie in [0, 1)",
            value: rho,
        });
    }
    let b = levels.len();
    if rho == 0.0 {
        let mut out = Vec::with_capacity(b);
        let mut prod = 1.0;
        for (&a, &c) in levels.iter().zip(candidates) {
            out.push(prod * a);
            if !c {
                prod *= 1.0 - a;
            }
        }
        return Ok(out);
    }
    let s = rho.sqrt();
    let t = (1.0 - rho).sqrt();
    let cs: Vec<f64> = levels.iter().map(|&a| upper_point(a)).collect();
    let eval = |rule: &GaussLegendre| -> Vec<f64> {
        let half = QUAD_LIMIT;
        let mut acc = vec![0.0; b];
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let z = half * x;
            let mut run = normal_pdf(z) * w * half;
            for k in 0..b {
                let u = (cs[k] - s * z) / t;
                acc[k] += run * normal_sf(u);
                if !candidates[k] {
                    run *= normal_cdf(u);
                }
            }
        }
        acc
    };
    let mut prev = eval(GaussLegendre::cached_pow2(MIN_LOG_NODES));
    let mut delta = f64::INFINITY;
    for k in MIN_LOG_NODES + 1..=MAX_LOG_NODES {
        let cur = eval(GaussLegendre::cached_pow2(k));
        delta = cur.iter().zip(&prev).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if delta < QUAD_TOL {
            // The first non-candidate position has an empty history.
            let mut out = cur;
            let mut seen_non_candidate = false;
            for k in 0..b {
                if !seen_non_candidate {
                    out[k] = levels[k];
                }
                out[k] = out[k].clamp(0.0, levels[k]);
                if !candidates[k] {
                    seen_non_candidate = true;
                }
            }
            return Ok(out);
        }
        prev = cur;
    }
    Err(Error::QuadratureNonConvergence {
        delta,
        nodes: 1 << MAX_LOG_NODES,
    })
}

fn empirical_alpha_c(
    samples: &EmpiricalSamples,
    history: &[(usize, f64)],
    position: usize,
    alpha_j: f64,
) -> Result<AlphaCEstimate> {
    let need = history.iter().map(|h| h.0).chain([position]).max().unwrap_or(0) + 1;
    if need > samples.width() {
        return Err(Error::ModelUnavailable(format!(
            "batch position {} exceeds the {} sampled columns",
            need - 1,
            samples.width()
        )));
    }
    let hits = samples
        .rows
        .iter()
        .filter(|row| row[position] <= alpha_j && history.iter().all(|&(k, a)| row[k] > a))
        .count();
    let n = samples.draws() as f64;
    let p = hits as f64 / n;
    Ok(AlphaCEstimate {
        value: p,
        std_error: (p * (1.0 - p) / n).sqrt(),
    })
}

/// Monte Carlo estimate of the Gaussian α^c from `draws` simulated batches.
pub fn alpha_c_monte_carlo(rho: f64, predecessors: &[f64], alpha_j: f64, draws: usize, seed: u64) -> AlphaCEstimate {
    let s = rho.sqrt();
    let t = (1.0 - rho).sqrt();
    let cs: Vec<f64> = predecessors.iter().map(|&a| upper_point(a)).collect();
    let cj = upper_point(alpha_j);
    const CHUNK: usize = 1 << 16;
    let chunks = draws.div_ceil(CHUNK);
    let count_chunk = |c: usize| -> u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let len = CHUNK.min(draws - c * CHUNK);
        let mut hits = 0u64;
        'draw: for _ in 0..len {
            let z0: f64 = rng.sample(StandardNormal);
            let common = s * z0;
            // P ≤ a ⇔ Z ≥ c(a) for a one-sided z-test.
            for &c in &cs {
                let e: f64 = rng.sample(StandardNormal);
                if common + t * e >= c {
                    continue 'draw;
                }
            }
            let e: f64 = rng.sample(StandardNormal);
            if common + t * e >= cj {
                hits += 1;
            }
        }
        hits
    };
    let hits: u64 = crate::par::map_indices(chunks, count_chunk).into_iter().sum();
    let n = draws as f64;
    let p = hits as f64 / n;
    AlphaCEstimate {
        value: p,
        std_error: (p * (1.0 - p) / n).sqrt(),
    }
}
