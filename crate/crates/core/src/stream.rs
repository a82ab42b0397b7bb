//! Line protocol for interactive online testing.
//!
//! ```text
//! > H 1 tau=0.8 lambda=0.16 conflicts=-
//! < LEVEL 1 0.0778147
//! > P 1 0.01
//! < DECISION 1 reject S=1 C=1
//! > P 7 0.5
//! < ERR unknown-index unknown hypothesis index 7
//! ```
//!
//! `tau`, `lambda` and `conflicts` may be omitted and then take the session
//! defaults / the empty set. Other commands: `FUTURE` (remaining level for
//! later hypotheses) and `END` (finalize). Blank lines and `#` comments are
//! ignored. Errors never change engine state.

use std::io::{self, BufRead, Write};

use crate::engine::{Engine, Registration};
use crate::error::Error;
use crate::replay::format_sig;

/// Short stable code for protocol error lines.
pub fn error_code(err: &Error) -> &'static str {
    match err.root() {
        Error::Domain { .. } => "domain",
        Error::InvalidSpec(_) => "invalid-spec",
        Error::NonMonotoneConflicts { .. } => "non-monotone-conflicts",
        Error::NonContiguousSuffix { .. } => "non-contiguous-suffix",
        Error::NotBatchForm { .. } => "not-batch-form",
        Error::InvalidConflict { .. } => "invalid-conflict",
        Error::IncompleteLedger { .. } => "incomplete-ledger",
        Error::LedgerGap { .. } => "ledger-gap",
        Error::MissingAlphaC { .. } => "missing-alpha-c",
        Error::NonMonotoneGamma { .. } => "non-monotone-gamma",
        Error::DegenerateRenormalization { .. } => "degenerate-renormalization",
        Error::HorizonExceeded { .. } => "horizon-exceeded",
        Error::MissingIndicator { .. } => "missing-indicator",
        Error::ScheduleViolation { .. } => "schedule-violation",
        Error::FrozenRowViolation { .. } => "frozen-row",
        Error::UnknownIndex(_) => "unknown-index",
        Error::DuplicateObservation(_) => "duplicate-observation",
        Error::OutOfOrderRegistration { .. } => "out-of-order",
        Error::BatchIncomplete { .. } => "batch-incomplete",
        Error::InvalidW0 { .. } => "invalid-w0",
        Error::ModelUnavailable(_) => "model-unavailable",
        Error::QuadratureNonConvergence { .. } => "quadrature",
        Error::HorizonTooLarge { .. } => "horizon-too-large",
        Error::InvalidConfig(_) => "invalid-config",
        Error::EmptyOutcomeSet => "empty-outcome-set",
        Error::MissingData(_) => "missing-data",
        Error::Parse { .. } => "parse",
        Error::Io(_) => "io",
        Error::Context { .. } => unreachable!("root strips context"),
    }
}

/// A protocol session around one engine.
#[derive(Debug, Clone)]
pub struct StreamSession {
    engine: Engine,
    default_tau: f64,
    default_lambda: f64,
    full_precision: bool,
}

fn syntax(msg: impl Into<String>) -> Error {
    Error::Parse { line: 0, msg: msg.into() }
}

impl StreamSession {
    pub fn new(engine: Engine, default_tau: f64, default_lambda: f64) -> Self {
        Self {
            engine,
            default_tau,
            default_lambda,
            full_precision: false,
        }
    }

    /// Print levels with shortest round-trip precision instead of 6
    /// significant digits.
    pub fn with_full_precision(mut self, full: bool) -> Self {
        self.full_precision = full;
        self
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn into_engine(self) -> Engine {
        self.engine
    }

    fn num(&self, x: f64) -> String {
        if self.full_precision {
            format!("{x}")
        } else {
            format_sig(x, 6)
        }
    }

    /// Response to one input line; `None` for blank lines and comments.
    pub fn handle_line(&mut self, line: &str) -> Option<String> {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            return None;
        }
        Some(match self.dispatch(line) {
            Ok(s) => s,
            Err(e) => format!("ERR {} {}", error_code(&e), e.root()),
        })
    }

    fn dispatch(&mut self, line: &str) -> Result<String, Error> {
        let mut tokens = line.split_whitespace();
        let cmd = tokens.next().unwrap_or_default();
        match cmd {
            "H" => {
                let id = parse_id(tokens.next())?;
                let (mut tau, mut lambda, mut conflicts) = (self.default_tau, self.default_lambda, Vec::new());
                for tok in tokens {
                    let (k, v) = tok.split_once('=').ok_or_else(|| syntax(format!("expected key=value, got '{tok}'")))?;
                    let num = |v: &str| v.parse::<f64>().map_err(|e| syntax(format!("{k}: {e}")));
                    match k {
                        "tau" => tau = num(v)?,
                        "lambda" => lambda = num(v)?,
                        "conflicts" => {
                            conflicts = if v == "-" || v.is_empty() {
                                Vec::new()
                            } else {
                                v.split(',').map(|j| parse_id(Some(j))).collect::<Result<_, _>>()?
                            }
                        }
                        other => return Err(syntax(format!("unknown field '{other}'"))),
                    }
                }
                let expected = self.engine.len() + 1;
                if id != expected {
                    return Err(Error::OutOfOrderRegistration { expected, got: id });
                }
                let level = self.engine.register(Registration::new(tau, lambda, conflicts))?;
                Ok(format!("LEVEL {id} {}", self.num(level)))
            }
            "P" => {
                let id = parse_id(tokens.next())?;
                let p: f64 = tokens
                    .next()
                    .ok_or_else(|| syntax("missing p-value"))?
                    .parse()
                    .map_err(|e| syntax(format!("p-value: {e}")))?;
                if tokens.next().is_some() {
                    return Err(syntax("trailing input"));
                }
                let obs = self.engine.observe(id, p)?;
                let ind = obs.indicators;
                Ok(format!(
                    "DECISION {id} {} S={} C={}",
                    if obs.reject { "reject" } else { "accept" },
                    ind.s as u8,
                    ind.c as u8
                ))
            }
            "FUTURE" => {
                let f = self.engine.future_level()?;
                Ok(format!("FUTURE {}", self.num(f)))
            }
            "END" => {
                self.engine.finalize()?;
                Ok("END".into())
            }
            other => Err(syntax(format!("unknown command '{other}'"))),
        }
    }

    /// Answer every input line until EOF, flushing after each response.
    pub fn run(&mut self, input: impl BufRead, mut output: impl Write) -> io::Result<()> {
        for line in input.lines() {
            if let Some(resp) = self.handle_line(&line?) {
                writeln!(output, "{resp}")?;
                output.flush()?;
            }
        }
        Ok(())
    }
}

fn parse_id(tok: Option<&str>) -> Result<usize, Error> {
    let t = tok.ok_or_else(|| syntax("missing index"))?;
    t.parse::<usize>()
        .ok()
        .filter(|&i| i > 0)
        .ok_or_else(|| syntax(format!("bad index '{t}'")))
}
