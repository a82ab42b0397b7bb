//! Replay of a recorded platform study and remaining-level accounting.
//!
//! Study files are line oriented:
//!
//! ```text
//! alpha 0.05
//! tau 0.8
//! lambda 0.3
//! gamma geometric:0.6
//! procedure graph-conf-u
//! T1 enter=1 exit=6.5 p=0.012
//! T2 enter=2 exit=6.5 p=NA
//! [conflicts]
//! T7: 4,5,6
//! ```
//!
//! Header keys are optional defaults. H_j is in the conflict set of a later
//! H_i when it was still running when H_i entered (exit_j > enter_i). Lines
//! in the optional `[conflicts]` section replace the derived set of one
//! hypothesis (`-` for none). `p=NA` marks an unavailable p-value.

use std::fmt;
use std::path::Path;

use crate::conflicts::{validate_conflicts, ConflictStructure};
use crate::engine::{Engine, EngineConfig, Procedure, Registration};
use crate::error::{Error, Result};
use crate::gamma::GammaSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyHypothesis {
    pub name: String,
    pub enter: f64,
    pub exit: f64,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Study {
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub gamma: Option<GammaSpec>,
    pub procedure: Option<Procedure>,
    pub hypotheses: Vec<StudyHypothesis>,
    /// Explicit conflict sets by index (1-based), overriding the derived ones.
    pub overrides: Vec<(usize, Vec<usize>)>,
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_index(tok: &str, line: usize) -> Result<usize> {
    let t = tok.trim();
    t.strip_prefix('T')
        .unwrap_or(t)
        .parse::<usize>()
        .ok()
        .filter(|&i| i > 0)
        .ok_or_else(|| perr(line, format!("bad hypothesis reference '{t}'")))
}

impl Study {
    pub fn parse(text: &str) -> Result<Self> {
        let mut study = Study::default();
        let mut in_conflicts = false;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let l = raw.split('#').next().unwrap_or("").trim();
            if l.is_empty() {
                continue;
            }
            if l == "[conflicts]" {
                in_conflicts = true;
                continue;
            }
            if in_conflicts {
                let (who, rest) = l.split_once(':').ok_or_else(|| perr(line, "expected 'T<i>: <j>,...'"))?;
                let i = parse_index(who, line)?;
                let set = if rest.trim() == "-" {
                    Vec::new()
                } else {
                    rest.split([',', ' '])
                        .filter(|t| !t.trim().is_empty())
                        .map(|t| parse_index(t, line))
                        .collect::<Result<Vec<_>>>()?
                };
                study.overrides.push((i, set));
                continue;
            }
            let (key, rest) = l.split_once(char::is_whitespace).unwrap_or((l, ""));
            let rest = rest.trim();
            let num = |s: &str| s.parse::<f64>().map_err(|e| perr(line, format!("{key}: {e}")));
            match key {
                "alpha" => study.alpha = Some(num(rest)?),
                "tau" => study.tau = Some(num(rest)?),
                "lambda" => study.lambda = Some(num(rest)?),
                "gamma" => study.gamma = Some(rest.parse().map_err(|e: Error| perr(line, e.to_string()))?),
                "procedure" => study.procedure = Some(rest.parse().map_err(|e: Error| perr(line, e.to_string()))?),
                name if name.starts_with('T') => {
                    let idx = parse_index(name, line)?;
                    if idx != study.hypotheses.len() + 1 {
                        return Err(perr(line, format!("expected T{}, found {name}", study.hypotheses.len() + 1)));
                    }
                    let (mut enter, mut exit, mut p) = (None, None, None);
                    for field in rest.split_whitespace() {
                        let (f, v) = field.split_once('=').ok_or_else(|| perr(line, format!("expected key=value, got '{field}'")))?;
                        match f {
                            "enter" => enter = Some(num(v)?),
                            "exit" => exit = Some(num(v)?),
                            "p" => {
                                p = Some(if v.eq_ignore_ascii_case("na") {
                                    None
                                } else {
                                    let x = num(v)?;
                                    if !(0.0..=1.0).contains(&x) {
                                        return Err(perr(line, format!("p-value {x} outside [0, 1]")));
                                    }
                                    Some(x)
                                })
                            }
                            other => return Err(perr(line, format!("unknown field '{other}'"))),
                        }
                    }
                    let enter = enter.ok_or_else(|| perr(line, "missing enter="))?;
                    let exit = exit.ok_or_else(|| perr(line, "missing exit="))?;
                    if exit < enter {
                        return Err(perr(line, "exit before enter"));
                    }
                    if let Some(prev) = study.hypotheses.last() {
                        if enter < prev.enter {
                            return Err(perr(line, "hypotheses must be listed in order of entry"));
                        }
                    }
                    study.hypotheses.push(StudyHypothesis {
                        name: name.to_string(),
                        enter,
                        exit,
                        p: p.ok_or_else(|| perr(line, "missing p="))?,
                    });
                }
                other => return Err(perr(line, format!("unknown key '{other}'"))),
            }
        }
        Ok(study)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::MissingData(format!("study file {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    /// Conflict sets from interval overlap plus overrides, validated.
    pub fn conflicts(&self) -> Result<ConflictStructure> {
        let h = &self.hypotheses;
        let mut sets: Vec<Vec<usize>> = (0..h.len())
            .map(|i| (0..i).filter(|&j| h[j].exit > h[i].enter).map(|j| j + 1).collect())
            .collect();
        for (i, set) in &self.overrides {
            if *i > sets.len() {
                return Err(Error::UnknownIndex(*i));
            }
            sets[i - 1].clone_from(set);
        }
        validate_conflicts(ConflictStructure::from_sets(sets))
    }
}

/// Replay settings; `None` falls back to the study header and then to the
/// platform-trial defaults α = 0.05, τ = 0.8, λ = 0.3, γ_i = q^i(1−q)/q with q = 0.6.
#[derive(Debug, Clone, Default)]
pub struct ReplayOptions {
    pub procedure: Option<Procedure>,
    pub gamma: Option<GammaSpec>,
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRow {
    pub name: String,
    pub conflicts: Vec<usize>,
    pub level: f64,
    pub p: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub procedure: Procedure,
    pub gamma: GammaSpec,
    pub alpha: f64,
    pub rows: Vec<ReplayRow>,
    pub rejections: usize,
    /// Level left for hypotheses after the study; `None` where the
    /// procedure has no closed form for it.
    pub future_level: Option<f64>,
}

impl ReplayReport {
    /// Text report; `digits` significant digits for levels (`None`: full).
    pub fn render(&self, digits: Option<usize>) -> String {
        let fmt = |x: f64| match digits {
            Some(d) => format_sig(x, d),
            None => format!("{x}"),
        };
        let mut out = format!("procedure {}\ngamma {}\nalpha {}\n", self.procedure, self.gamma, self.alpha);
        for r in &self.rows {
            let c = if r.conflicts.is_empty() {
                "-".to_string()
            } else {
                r.conflicts.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(",")
            };
            out.push_str(&format!(
                "{} conflicts={} level={} p={} {}\n",
                r.name,
                c,
                fmt(r.level),
                r.p,
                if r.reject { "reject" } else { "accept" }
            ));
        }
        out.push_str(&format!("rejections {}\n", self.rejections));
        match self.future_level {
            Some(f) => out.push_str(&format!("future-level {}\n", fmt(f))),
            None => out.push_str("future-level NA\n"),
        }
        out
    }
}

impl fmt::Display for ReplayReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(Some(6)))
    }
}

/// `x` with `digits` significant digits, trailing zeros removed.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = digits.max(1);
    let exp = x.abs().log10().floor() as i32;
    if !(-5..=15).contains(&exp) {
        return format!("{:.*e}", digits - 1, x);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Run a procedure over the study in order of entry.
pub fn replay_study(study: &Study, opts: &ReplayOptions) -> Result<ReplayReport> {
    let procedure = opts
        .procedure
        .clone()
        .or_else(|| study.procedure.clone())
        .unwrap_or(Procedure::GraphConfU);
    let gamma = match opts.gamma.clone().or_else(|| study.gamma.clone()) {
        Some(g) => g,
        None => GammaSpec::geometric(0.6)?,
    };
    let alpha = opts.alpha.or(study.alpha).unwrap_or(0.05);
    let tau = opts.tau.or(study.tau).unwrap_or(0.8);
    let lambda = opts.lambda.or(study.lambda).unwrap_or(0.3);
    let missing: Vec<&str> = study
        .hypotheses
        .iter()
        .filter(|h| h.p.is_none())
        .map(|h| h.name.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingData(format!(
            "p-values not available for {} (fill in p= for every hypothesis)",
            missing.join(", ")
        )));
    }
    let mut conflicts = study.conflicts()?;
    if procedure.needs_lags() {
        conflicts = conflicts.lag_closure();
    }
    let mut engine = Engine::new(EngineConfig::new(alpha, gamma.clone(), procedure.clone()))?;
    let mut rows = Vec::with_capacity(study.len());
    for (k, h) in study.hypotheses.iter().enumerate() {
        let i = k + 1;
        let set = conflicts.conflict_set(i).to_vec();
        let level = engine
            .register(Registration::new(tau, lambda, set.clone()))
            .map_err(|e| e.context(h.name.clone()))?;
        let p = h.p.expect("checked above");
        let obs = engine.observe(i, p).map_err(|e| e.context(h.name.clone()))?;
        rows.push(ReplayRow {
            name: h.name.clone(),
            conflicts: set,
            level,
            p,
            reject: obs.reject,
        });
    }
    engine.finalize()?;
    let future_level = match engine.future_level() {
        Ok(f) => Some(f),
        Err(Error::InvalidConfig(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ReplayReport {
        procedure,
        gamma,
        alpha,
        rejections: rows.iter().filter(|r| r.reject).count(),
        rows,
        future_level,
    })
}

/// Twelve hypotheses in the RECOVERY conflict pattern, every p-value
/// between λ and τ so that every level is spent and nothing carries over.
pub fn synthetic_study() -> Study {
    let text = RECOVERY_STRUCTURE.replace("p=NA", "p=0.5");
    Study::parse(&text).expect("built-in structure parses")
}

/// Entry/exit pattern of the twelve RECOVERY comparisons: T1–T3 conflict
/// with everything up to T6, T4 and T6 up to T9, T5 up to T10. Timings are
/// ordinal placeholders; p-values are not distributed with the crate.
pub const RECOVERY_STRUCTURE: &str = "\
alpha 0.05
tau 0.8
lambda 0.3
T1 enter=1 exit=6.5 p=NA
T2 enter=2 exit=6.5 p=NA
T3 enter=3 exit=6.5 p=NA
T4 enter=4 exit=9.5 p=NA
T5 enter=5 exit=10.5 p=NA
T6 enter=6 exit=9.5 p=NA
T7 enter=7 exit=12.5 p=NA
T8 enter=8 exit=12.5 p=NA
T9 enter=9 exit=12.5 p=NA
T10 enter=10 exit=12.5 p=NA
T11 enter=11 exit=12.5 p=NA
T12 enter=12 exit=12.5 p=NA
";
