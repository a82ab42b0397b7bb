//! Versioned text snapshots of an engine.
//!
//! A snapshot is the configuration plus the event log. Restoring replays the
//! log and checks every reissued level bit for bit against the recorded one.
//!
//! ```text
//! addis-snapshot v1
//! alpha 0.2
//! gamma basel
//! horizon-cap 2000
//! procedure graph-conf rule=renormalized
//! events
//! H 0.8 0.16 - 0.0778146690373154
//! P 1 0.5
//! W g* 1:3:0.5;2:4:0.25
//! F
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{Engine, EngineConfig, Event, Procedure, Registration};
use crate::error::{Error, Result};
use crate::gamma::GammaSpec;
use crate::schedule::WeightTable;

pub const SNAPSHOT_HEADER: &str = "addis-snapshot v1";

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

impl Engine {
    /// Serialize configuration and event log.
    pub fn snapshot(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(out, "{SNAPSHOT_HEADER}");
        let _ = writeln!(out, "alpha {}", c.alpha);
        let _ = writeln!(out, "gamma {}", c.gamma);
        let _ = writeln!(out, "horizon-cap {}", c.horizon_cap);
        let _ = writeln!(out, "procedure {}", self.initial_procedure);
        let _ = writeln!(out, "events");
        for ev in &self.events {
            match ev {
                Event::Register { reg, level } => {
                    let conflicts = if reg.conflicts.is_empty() {
                        "-".to_string()
                    } else {
                        reg.conflicts.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(",")
                    };
                    let _ = writeln!(out, "H {} {} {} {}", reg.tau, reg.lambda, conflicts, level);
                }
                Event::Observe { index, p } => {
                    let _ = writeln!(out, "P {index} {p}");
                }
                Event::Finalize => {
                    let _ = writeln!(out, "F");
                }
                Event::Weights(t) => {
                    let text = t.to_text();
                    let mut lines = text.lines();
                    let kind = lines.next().unwrap_or("kind g*").trim_start_matches("kind ").to_string();
                    let entries: Vec<String> = lines
                        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(":"))
                        .collect();
                    let _ = writeln!(out, "W {kind} {}", entries.join(";"));
                }
            }
        }
        out
    }

    /// Rebuild an engine from [`Engine::snapshot`] output.
    pub fn restore(text: &str) -> Result<Engine> {
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim()));
        match lines.next() {
            Some((_, SNAPSHOT_HEADER)) => {}
            Some((k, other)) => return Err(parse_err(k, format!("expected '{SNAPSHOT_HEADER}', found '{other}'"))),
            None => return Err(parse_err(1, "empty snapshot")),
        }
        let mut alpha = None;
        let mut gamma = None;
        let mut cap = None;
        let mut procedure = None;
        for (k, line) in lines.by_ref() {
            if line.is_empty() {
                continue;
            }
            if line == "events" {
                break;
            }
            let (key, value) = line.split_once(' ').ok_or_else(|| parse_err(k, "expected 'key value'"))?;
            let ctx = |e: Error| parse_err(k, e.to_string());
            match key {
                "alpha" => alpha = Some(value.parse::<f64>().map_err(|e| parse_err(k, e.to_string()))?),
                "gamma" => gamma = Some(value.parse::<GammaSpec>().map_err(ctx)?),
                "horizon-cap" => cap = Some(value.parse::<usize>().map_err(|e| parse_err(k, e.to_string()))?),
                "procedure" => procedure = Some(value.parse::<Procedure>().map_err(ctx)?),
                other => return Err(parse_err(k, format!("unknown key '{other}'"))),
            }
        }
        let mut config = EngineConfig::new(
            alpha.ok_or_else(|| parse_err(1, "missing alpha"))?,
            gamma.ok_or_else(|| parse_err(1, "missing gamma"))?,
            procedure.ok_or_else(|| parse_err(1, "missing procedure"))?,
        );
        if let Some(cap) = cap {
            config.horizon_cap = cap;
        }
        let mut engine = Engine::new(config)?;
        for (k, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(k, e.to_string()));
            match fields.as_slice() {
                ["H", tau, lambda, conflicts, level] => {
                    let conflicts = if *conflicts == "-" {
                        Vec::new()
                    } else {
                        conflicts
                            .split(',')
                            .map(|j| j.parse::<usize>().map_err(|e| parse_err(k, e.to_string())))
                            .collect::<Result<Vec<_>>>()?
                    };
                    let want = num(level)?;
                    let got = engine
                        .register(Registration::new(num(tau)?, num(lambda)?, conflicts))
                        .map_err(|e| e.context(format!("snapshot line {k}")))?;
                    if got.to_bits() != want.to_bits() {
                        return Err(parse_err(k, format!("replayed level {got} differs from recorded {want}")));
                    }
                }
                ["P", index, p] => {
                    let index = index.parse::<usize>().map_err(|e| parse_err(k, e.to_string()))?;
                    engine
                        .observe(index, num(p)?)
                        .map_err(|e| e.context(format!("snapshot line {k}")))?;
                }
                ["F"] => engine.finalize()?,
                ["W", kind, entries @ ..] => {
                    let mut text = format!("kind {kind}\n");
                    for e in entries.iter().flat_map(|s| s.split(';')).filter(|s| !s.is_empty()) {
                        text.push_str(&e.replace(':', " "));
                        text.push('\n');
                    }
                    let table = WeightTable::parse(&text).map_err(|e| parse_err(k, e.to_string()))?;
                    engine.replace_weights(table)?;
                }
                _ => return Err(parse_err(k, format!("unrecognized event '{line}'"))),
            }
        }
        Ok(engine)
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.snapshot())?;
        Ok(())
    }

    pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Engine> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Engine::restore(&text).map_err(|e| e.context(path.display().to_string()))
    }
}
