//! Parameter grids read from TOML and written as CSV.
//!
//! ```toml
//! name = "fig5"
//! seed = 1
//! trials = 1000
//! n = 100
//! alpha = 0.2
//! tau = 0.8
//! lambda = 0.16
//!
//! [[procedure]]
//! spec = "spending-local"
//!
//! [[procedure]]
//! spec = "graph-conf-u"
//!
//! [[sweep]]
//! gamma = ["logq", "power:1.6", "basel"]
//! b = [1, 5, 10, 20]
//! pi_a = [0.1, 0.3, 0.5, 0.7, 0.9]
//! ```
//!
//! Every sweep is a full product of its axes (`gamma`, `b`, `rho`, `mu_n`,
//! `e`, `pi_a`) and may carry its own `[[sweep.procedure]]` list. In a
//! procedure spec, `rho=data` is replaced by the ρ of the grid point.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use super::{run_point, ConditionSummary, Metrics, SimConfig};
use crate::engine::Procedure;
use crate::error::{Error, Result};
use crate::gamma::GammaSpec;

fn default_alpha() -> f64 {
    0.2
}
fn default_tau() -> f64 {
    0.8
}
fn default_lambda() -> f64 {
    0.16
}
fn default_shift() -> f64 {
    3.0
}
fn default_n() -> usize {
    100
}
fn default_trials() -> usize {
    1000
}
fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcedureEntry {
    pub spec: String,
    pub label: Option<String>,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub gamma: Option<Vec<String>>,
    #[serde(default)]
    pub b: Option<Vec<usize>>,
    #[serde(default)]
    pub rho: Option<Vec<f64>>,
    #[serde(default)]
    pub mu_n: Option<Vec<f64>>,
    #[serde(default)]
    pub e: Option<Vec<usize>>,
    pub pi_a: Vec<f64>,
    #[serde(default, rename = "procedure")]
    pub procedures: Vec<ProcedureEntry>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_shift")]
    pub alt_shift: f64,
    #[serde(default, rename = "procedure")]
    pub procedures: Vec<ProcedureEntry>,
    #[serde(rename = "sweep")]
    pub sweeps: Vec<SweepSpec>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl GridSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: GridSpec = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            msg: e.message().to_string(),
        })?;
        spec.points()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| e.context(path.display().to_string()))
    }

    /// All grid points in output order, each with its CSV procedure label.
    pub fn points(&self) -> Result<Vec<(String, SimConfig)>> {
        let mut out = Vec::new();
        for (k, sweep) in self.sweeps.iter().enumerate() {
            let procs = if sweep.procedures.is_empty() { &self.procedures } else { &sweep.procedures };
            if procs.is_empty() {
                return Err(Error::InvalidConfig(format!("sweep {} has no procedures", k + 1)));
            }
            let gammas = sweep.gamma.clone().unwrap_or_else(|| vec!["basel".into()]);
            let bs = sweep.b.clone().unwrap_or_else(|| vec![1]);
            let rhos = sweep.rho.clone().unwrap_or_else(|| vec![0.5]);
            let mus = sweep.mu_n.clone().unwrap_or_else(|| vec![-0.5]);
            let es = sweep.e.clone().unwrap_or_else(|| vec![0]);
            for entry in procs {
                for g in &gammas {
                    let gamma: GammaSpec = g.parse()?;
                    for &b in &bs {
                        for &rho in &rhos {
                            for &mu_n in &mus {
                                for &e in &es {
                                    let text = entry.spec.replace("rho=data", &format!("rho={rho}"));
                                    let procedure: Procedure =
                                        text.parse().map_err(|e: Error| e.context(format!("procedure '{}'", entry.spec)))?;
                                    let label = entry.label.clone().unwrap_or(text);
                                    for &pi_a in &sweep.pi_a {
                                        let cfg = SimConfig {
                                            n: self.n,
                                            b,
                                            rho,
                                            pi_a,
                                            mu_n,
                                            alt_shift: self.alt_shift,
                                            trials: self.trials,
                                            seed: self.seed,
                                            alpha: self.alpha,
                                            tau: entry.tau.unwrap_or(self.tau),
                                            lambda: entry.lambda.unwrap_or(self.lambda),
                                            gamma: gamma.clone(),
                                            procedure: procedure.clone(),
                                            e,
                                        };
                                        cfg.validate().map_err(|err| err.context(format!("sweep {}", k + 1)))?;
                                        out.push((label.clone(), cfg));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One CSV row: the configuration echo and its metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub procedure: String,
    pub config: SimConfig,
    pub metrics: Metrics,
    pub condition: Option<ConditionSummary>,
}

pub const CSV_HEADER: &str =
    "procedure,gamma_id,n,b,rho,pi_A,mu_N,e,trials,fwer,fwer_se,pfer,power,power_se,fdr,fdr_se,mfdr";

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        let (c, m) = (&self.config, &self.metrics);
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.procedure,
            c.gamma.id(),
            c.n,
            c.b,
            c.rho,
            c.pi_a,
            c.mu_n,
            c.e,
            m.trials,
            m.fwer,
            m.fwer_se,
            m.pfer,
            m.power,
            m.power_se,
            m.fdr,
            m.fdr_se,
            m.mfdr
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub name: String,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
}

impl GridResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# grid={} seed={} rng=chacha20(seed,stream=trial) power=mean over trials with >=1 alternative",
            self.name, self.seed
        );
        let _ = writeln!(out, "{CSV_HEADER}");
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.csv_line());
        }
        out
    }
}

/// Run every grid point; `check` also verifies the budget condition of
/// every trajectory.
pub fn run_grid(spec: &GridSpec, check: bool) -> Result<GridResult> {
    let mut rows = Vec::new();
    for (label, cfg) in spec.points()? {
        let res = run_point(&cfg, check).map_err(|e| {
            e.context(format!(
                "grid point {label} gamma={} b={} rho={} pi_A={} mu_N={} e={}",
                cfg.gamma, cfg.b, cfg.rho, cfg.pi_a, cfg.mu_n, cfg.e
            ))
        })?;
        log::debug!("{label} b={} pi_A={}: {:?}", cfg.b, cfg.pi_a, res.metrics);
        rows.push(MetricsRow {
            procedure: label,
            config: cfg,
            metrics: res.metrics,
            condition: res.condition,
        });
    }
    Ok(GridResult {
        name: spec.name.clone(),
        seed: spec.seed,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
name = "small"
trials = 20
n = 20

[[procedure]]
spec = "spending-local"

[[procedure]]
spec = "adaptive-corr rho=data"
tau = 1.0
lambda = 0.2

[[sweep]]
gamma = ["basel", "power:1.6"]
b = [1, 5]
rho = [0.3]
pi_a = [0.2, 0.6]
"#;

    #[test]
    fn expands_product() {
        let spec = GridSpec::parse(SMALL).unwrap();
        let pts = spec.points().unwrap();
        assert_eq!(pts.len(), 2 * 2 * 2 * 2);
        let corr = &pts.last().unwrap();
        assert_eq!(corr.0, "adaptive-corr rho=0.3");
        assert_eq!(corr.1.tau, 1.0);
    }

    #[test]
    fn runs_and_writes_csv() {
        let spec = GridSpec::parse(SMALL).unwrap();
        let res = run_grid(&spec, true).unwrap();
        let csv = res.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# grid=small"));
        assert_eq!(lines[1], CSV_HEADER);
        assert_eq!(lines.len(), 2 + 16);
        for l in &lines[2..] {
            assert_eq!(l.split(',').count(), 17);
        }
        assert!(res.rows.iter().all(|r| r.condition.unwrap().failures == 0));
        assert_eq!(csv, run_grid(&spec, false).unwrap().to_csv());
    }

    #[test]
    fn parse_errors_carry_lines() {
        let text = "name = \"x\"\n\n[[sweep]]\npi_a = [0.1]\nbogus = 3\n";
        match GridSpec::parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
        let bad_b = "name = \"x\"\nn = 10\n[[procedure]]\nspec = \"graph-conf-u\"\n[[sweep]]\nb = [3]\npi_a = [0.1]\n";
        assert!(GridSpec::parse(bad_b).is_err());
    }
}
