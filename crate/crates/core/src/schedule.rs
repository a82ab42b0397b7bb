//! Weight schedules: base weights g_{j,i}, conflict-adjusted g*_{j,i}
//! (renormalized, uniform, tabulated, telescoping and the rerouting of
//! blocked mass) and reward weights h*_{j,i}.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::conflicts::ConflictStructure;
use crate::error::{Error, Result};
use crate::gamma::{GammaSpec, GammaTable};

/// Default cap on the horizon of a full rerouted-weight table.
pub const DEFAULT_HORIZON_CAP: usize = 2000;

/// Tolerance on row sums of weight tables.
const ROW_SUM_TOL: f64 = 1e-12;

/// How g*_{j,i} (or h*_{j,i}) is built.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    /// g_{j,i} = γ_{i-j}; conflicting entries are dropped.
    ShiftedGamma,
    /// γ_{i-j} / (1 - Σ_{k=j+1}^{E_j} γ_{k-j}) for i > E_j, else 0.
    Renormalized,
    /// Data-dependent telescoping weights through t(j); conflicting entries
    /// are dropped.
    Lemma1,
    /// Telescoping base weights with blocked mass rerouted (lag form only).
    Algorithm1,
    /// 1/m on each of the first m slots after E_j.
    UniformNext(usize),
    /// Explicit table.
    Table(Arc<WeightTable>),
}

impl WeightRule {
    /// Rules whose weights depend on observed indicators.
    pub fn is_data_dependent(&self) -> bool {
        matches!(self, WeightRule::Lemma1 | WeightRule::Algorithm1)
    }
}

impl fmt::Display for WeightRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightRule::ShiftedGamma => write!(f, "shifted-gamma"),
            WeightRule::Renormalized => write!(f, "renormalized"),
            WeightRule::Lemma1 => write!(f, "lemma1"),
            WeightRule::Algorithm1 => write!(f, "algorithm1"),
            WeightRule::UniformNext(m) => write!(f, "uniform-next:{m}"),
            WeightRule::Table(t) => write!(f, "table:{}", t.source().unwrap_or("<inline>")),
        }
    }
}

impl FromStr for WeightRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "shifted-gamma" => return Ok(WeightRule::ShiftedGamma),
            "renormalized" => return Ok(WeightRule::Renormalized),
            "lemma1" => return Ok(WeightRule::Lemma1),
            "algorithm1" => return Ok(WeightRule::Algorithm1),
            _ => {}
        }
        if let Some(m) = s.strip_prefix("uniform-next:") {
            let m: usize = m
                .parse()
                .map_err(|e| Error::InvalidConfig(format!("bad slot count in '{s}': {e}")))?;
            if m == 0 {
                return Err(Error::InvalidConfig("uniform-next needs at least one slot".into()));
            }
            return Ok(WeightRule::UniformNext(m));
        }
        if let Some(path) = s.strip_prefix("table:") {
            return Ok(WeightRule::Table(Arc::new(WeightTable::load(path)?)));
        }
        Err(Error::InvalidConfig(format!("unknown weight rule '{s}'")))
    }
}

/// What a weight table holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    /// Base weights g_{j,i}.
    Base,
    /// Conflict-adjusted weights g*_{j,i}.
    Adjusted,
    /// Reward weights h*_{j,i}.
    Reward,
}

impl TableKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "g" => Some(TableKind::Base),
            "g*" | "g-star" => Some(TableKind::Adjusted),
            "h*" | "h-star" => Some(TableKind::Reward),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            TableKind::Base => "g",
            TableKind::Adjusted => "g*",
            TableKind::Reward => "h*",
        }
    }
}

/// Sparse table of weights, one sorted row per source index.
///
/// Text format: `#` comments, a header line `kind g|g*|h*`, then one
/// `j i w` line per nonzero weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    kind: TableKind,
    rows: Vec<Vec<(usize, f64)>>,
    source: Option<String>,
}

impl WeightTable {
    pub fn from_entries(kind: TableKind, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        for (j, i, w) in entries {
            if j == 0 || i <= j {
                return Err(Error::InvalidConfig(format!("weight ({j}, {i}) needs 1 <= j < i")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidConfig(format!("weight ({j}, {i}) = {w} must be >= 0")));
            }
            if rows.len() < j {
                rows.resize(j, Vec::new());
            }
            rows[j - 1].push((i, w));
        }
        for (k, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|e| e.0);
            if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidConfig(format!("duplicate weight ({}, {})", k + 1, w[0].0)));
            }
            let sum: f64 = row.iter().map(|e| e.1).sum();
            if sum > 1.0 + ROW_SUM_TOL {
                return Err(Error::InvalidConfig(format!("row {} sums to {sum} > 1", k + 1)));
            }
        }
        Ok(Self {
            kind,
            rows,
            source: None,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut entries = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: k + 1, msg };
            let mut it = line.split_whitespace();
            let first = it.next().unwrap();
            if kind.is_none() {
                if first != "kind" {
                    return Err(parse_err("expected header 'kind g|g*|h*'".into()));
                }
                let name = it.next().ok_or_else(|| parse_err("missing table kind".into()))?;
                kind = Some(TableKind::parse(name).ok_or_else(|| parse_err(format!("unknown table kind '{name}'")))?);
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(parse_err("expected 'j i w'".into()));
            }
            let j = fields[0].parse::<usize>().map_err(|e| parse_err(e.to_string()))?;
            let i = fields[1].parse::<usize>().map_err(|e| parse_err(e.to_string()))?;
            let w = fields[2].parse::<f64>().map_err(|e| parse_err(e.to_string()))?;
            entries.push((j, i, w));
        }
        let kind = kind.ok_or(Error::Parse {
            line: 1,
            msg: "empty weight table".into(),
        })?;
        Self::from_entries(kind, entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut t = Self::parse(&text).map_err(|e| e.context(path.display().to_string()))?;
        t.source = Some(path.display().to_string());
        Ok(t)
    }

    pub fn kind(&self) -> TableKind {
        self.kind
    }

    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        match self.rows.get(j.wrapping_sub(1)) {
            Some(row) => row.binary_search_by_key(&i, |e| e.0).map_or(0.0, |k| row[k].1),
            None => 0.0,
        }
    }

    /// Nonzero entries of row j.
    pub fn row(&self, j: usize) -> &[(usize, f64)] {
        self.rows.get(j.wrapping_sub(1)).map_or(&[], Vec::as_slice)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("kind {}\n", self.kind.name());
        for (k, row) in self.rows.iter().enumerate() {
            for (i, w) in row {
                out.push_str(&format!("{} {} {}\n", k + 1, i, w));
            }
        }
        out
    }
}

/// Telescoping base weight (γ_{t+i-j-1} - γ_{t+i-j}) / γ_t.
pub fn lemma1_base_weight(spec: &GammaSpec, t_j: usize, j: usize, i: usize) -> Result<f64> {
    if t_j == 0 || j == 0 || i <= j {
        return Err(Error::Domain {
            what: "lemma1 weight needs t_j >= 1 and i > j >= 1",
            value: i as f64,
        });
    }
    let top = spec.value(t_j + i - j - 1)?;
    let next = spec.value(t_j + i - j)?;
    if next > top {
        return Err(Error::NonMonotoneGamma { index: t_j + i - j });
    }
    Ok((top - next) / spec.value(t_j)?)
}

/// Table-backed telescoping weight; the table must cover index `t + i - j`.
#[inline]
pub(crate) fn lemma1_weight(gamma: &GammaTable, t: usize, j: usize, i: usize) -> f64 {
    let k = t + i - j;
    let d = gamma.get(k - 1) - gamma.get(k);
    let g0 = gamma.get(t);
    if g0 > 0.0 {
        d / g0
    } else {
        0.0
    }
}

/// Row of renormalized weights with a degeneracy flag.
#[derive(Debug, Clone, PartialEq)]
pub struct RenormalizedRow {
    pub weights: Vec<f64>,
    /// All base mass was blocked; weights are zero.
    pub degenerate: bool,
}

impl RenormalizedRow {
    /// Turn a degenerate row into [`Error::DegenerateRenormalization`].
    pub fn into_result(self, row: usize) -> Result<Vec<f64>> {
        if self.degenerate {
            Err(Error::DegenerateRenormalization { row })
        } else {
            Ok(self.weights)
        }
    }
}

/// Renormalize one row of base weights: blocked slots get 0, the others
/// are scaled by 1/(1 - blocked mass).
pub fn renormalized_conflict_weights(base: &[f64], blocked: &[bool]) -> RenormalizedRow {
    assert_eq!(base.len(), blocked.len());
    let blocked_mass: f64 = base.iter().zip(blocked).filter(|(_, &b)| b).map(|(w, _)| w).sum();
    let denom = 1.0 - blocked_mass;
    if denom <= 1e-15 {
        log::warn!("renormalization is degenerate: blocked mass {blocked_mass}");
        return RenormalizedRow {
            weights: vec![0.0; base.len()],
            degenerate: true,
        };
    }
    RenormalizedRow {
        weights: base
            .iter()
            .zip(blocked)
            .map(|(w, &b)| if b { 0.0 } else { w / denom })
            .collect(),
        degenerate: false,
    }
}

/// One row j of the rerouted weights, evaluated lazily.
///
/// The push-form rerouting loop is rearranged per row: g⁻_{j,m} is
/// kept sparsely for m up to a frontier, and
///
/// * blocked m (m - L_m ≤ j): g⁻_m = g_{j,m} + Σ_{l<m} g⁻_l g_{l,m}
/// * otherwise:              g⁻_m = Σ_{l ≥ m-L_m} g⁻_l g_{l,m}
///
/// so that g*_{j,i} = g_{j,i} + Σ_{l < i-L_i} g⁻_l g_{l,i} for unblocked i.
/// Level i only needs the frontier at i - L_i - 1, so the row never touches
/// outcomes that conflict with i.
#[derive(Debug, Clone, PartialEq)]
pub struct Alg1Row {
    j: usize,
    neg: Vec<(usize, f64)>,
    frontier: usize,
}

impl Alg1Row {
    pub fn new(j: usize) -> Self {
        Self {
            j,
            neg: Vec::new(),
            frontier: j,
        }
    }

    pub fn frontier(&self) -> usize {
        self.frontier
    }

    /// Nonzero rerouted masses g⁻_{j,m} computed so far.
    pub fn rerouted(&self) -> &[(usize, f64)] {
        &self.neg
    }

    /// Compute g⁻_{j,m} for all m ≤ `upto`. `window_start(m)` is m - L_m and
    /// `g(l, m)` the base weight.
    pub fn extend(&mut self, upto: usize, window_start: impl Fn(usize) -> usize, g: impl Fn(usize, usize) -> f64) {
        while self.frontier < upto {
            let m = self.frontier + 1;
            let ws = window_start(m);
            let v = if ws <= self.j {
                let mut acc = g(self.j, m);
                for &(l, w) in &self.neg {
                    acc += w * g(l, m);
                }
                acc
            } else {
                let mut acc = 0.0;
                for &(l, w) in self.neg.iter().rev() {
                    if l < ws {
                        break;
                    }
                    acc += w * g(l, m);
                }
                acc
            };
            if v != 0.0 {
                self.neg.push((m, v));
            }
            self.frontier = m;
        }
    }

    /// g*_{j,i}; needs the frontier at `window_start_i - 1` or beyond.
    pub fn g_star(&self, i: usize, window_start_i: usize, g: impl Fn(usize, usize) -> f64) -> f64 {
        if window_start_i <= self.j {
            return 0.0;
        }
        debug_assert!(self.frontier + 1 >= window_start_i);
        let mut acc = g(self.j, i);
        for &(l, w) in &self.neg {
            if l >= window_start_i {
                break;
            }
            acc += w * g(l, i);
        }
        acc
    }

    /// Mass that leaves the horizon n: Σ_{k>n} g_{j,k} + Σ_m g⁻_m Σ_{k>n} g_{m,k}.
    /// Needs the frontier at n.
    pub fn overflow(&self, n: usize, tail: impl Fn(usize, usize) -> f64) -> f64 {
        let mut acc = tail(self.j, n);
        for &(m, w) in &self.neg {
            if m > n {
                break;
            }
            acc += w * tail(m, n);
        }
        acc
    }
}

/// Full rerouted-weight table up to horizon n.
#[derive(Debug, Clone, PartialEq)]
pub struct Algorithm1Table {
    n: usize,
    /// rows[j-1][i-j-1] = g*_{j,i} for j < i ≤ n.
    rows: Vec<Vec<f64>>,
    /// Mass of each row routed past n.
    pub overflow: Vec<f64>,
}

impl Algorithm1Table {
    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        if j == 0 || i <= j || i > self.n {
            return 0.0;
        }
        self.rows[j - 1][i - j - 1]
    }

    pub fn row_sum(&self, j: usize) -> f64 {
        self.rows[j - 1].iter().sum()
    }
}

/// t(j) = 1 + Σ_{k<j} (S_k - C_k) from a feed of spend flags.
pub fn spending_counters(spends: &[bool]) -> Vec<usize> {
    let mut t = Vec::with_capacity(spends.len() + 1);
    t.push(0); // unused slot 0
    let mut acc = 1;
    for &s in spends {
        t.push(acc);
        acc += s as usize;
    }
    t
}

/// Rerouting over telescoping base weights for indices 1..=n. `lags[i-1]` is
/// L_i and `spends[k-1]` is S_k - C_k.
pub fn algorithm1_weights(
    spec: &GammaSpec,
    lags: &[usize],
    n: usize,
    spends: &[bool],
    cap: usize,
) -> Result<Algorithm1Table> {
    if n > cap {
        return Err(Error::HorizonExceeded { requested: n, cap });
    }
    if lags.len() < n || spends.len() < n {
        return Err(Error::InvalidConfig(format!("lags and indicator feed must cover {n} indices")));
    }
    spec.check_nonincreasing(2 * n + 2)?;
    let mut gamma = GammaTable::new(spec.clone());
    gamma.ensure(2 * n + 2)?;
    let t = spending_counters(&spends[..n]);
    let g = |l: usize, m: usize| lemma1_weight(&gamma, t[l], l, m);
    let ws = |m: usize| m - lags[m - 1];
    let tail = |l: usize, m: usize| {
        let k = t[l] + m - l;
        gamma.get(k) / gamma.get(t[l])
    };
    let mut rows = Vec::with_capacity(n);
    let mut overflow = Vec::with_capacity(n);
    for j in 1..=n {
        let mut row = Alg1Row::new(j);
        row.extend(n, ws, g);
        rows.push((j + 1..=n).map(|i| row.g_star(i, ws(i), g)).collect());
        overflow.push(row.overflow(n, tail));
    }
    Ok(Algorithm1Table { n, rows, overflow })
}

/// Dense weight matrix, `get(j, i)` for 1 ≤ j < i ≤ n.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    data: Vec<f64>,
    /// Rows whose renormalization was degenerate.
    pub degenerate_rows: Vec<usize>,
}

impl WeightMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; (n + 1) * (n + 1)],
            degenerate_rows: Vec::new(),
        }
    }

    /// Matrix with entries `f(j, i)` for 1 ≤ j < i ≤ n.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for j in 1..=n {
            for i in j + 1..=n {
                m.set(j, i, f(j, i));
            }
        }
        m
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.data[j * (self.n + 1) + i]
    }

    #[inline]
    pub fn set(&mut self, j: usize, i: usize, w: f64) {
        self.data[j * (self.n + 1) + i] = w;
    }

    pub fn row_sum(&self, j: usize) -> f64 {
        (j + 1..=self.n).map(|i| self.get(j, i)).sum()
    }
}

/// g*_{j,i} for the data-independent rules over a conflict structure,
/// truncated at n = structure length.
pub fn conflict_adjusted_weights(
    rule: &WeightRule,
    spec: &GammaSpec,
    conflicts: &ConflictStructure,
) -> Result<WeightMatrix> {
    let n = conflicts.len();
    let mut gamma = GammaTable::new(spec.clone());
    gamma.ensure(n + 1)?;
    let releases = conflicts.releases();
    let mut out = WeightMatrix::zeros(n);
    for j in 1..=n {
        let release = releases[j - 1].unwrap_or(n);
        match rule {
            WeightRule::ShiftedGamma => {
                for i in j + 1..=n {
                    if !conflicts.conflicts(j, i) {
                        out.set(j, i, gamma.get(i - j));
                    }
                }
            }
            WeightRule::Renormalized => {
                let base: Vec<f64> = (j + 1..=n).map(|i| gamma.get(i - j)).collect();
                // Slots past n are never blocked, so the truncated base row
                // gives the same denominator as the infinite one.
                let blocked: Vec<bool> = (j + 1..=n).map(|i| i <= release).collect();
                let row = renormalized_conflict_weights(&base, &blocked);
                if row.degenerate {
                    out.degenerate_rows.push(j);
                }
                for (k, w) in row.weights.into_iter().enumerate() {
                    out.set(j, j + 1 + k, w);
                }
            }
            WeightRule::UniformNext(m) => {
                if releases[j - 1].is_some() {
                    for i in release + 1..=(release + m).min(n) {
                        out.set(j, i, 1.0 / *m as f64);
                    }
                }
            }
            WeightRule::Table(table) => {
                for &(i, w) in table.row(j) {
                    if i > n {
                        break;
                    }
                    if conflicts.conflicts(j, i) && w != 0.0 {
                        return Err(Error::ScheduleViolation { j, i, weight: w });
                    }
                    out.set(j, i, w);
                }
            }
            WeightRule::Lemma1 | WeightRule::Algorithm1 => {
                return Err(Error::InvalidConfig(format!(
                    "'{rule}' weights depend on observed outcomes; use algorithm1_weights"
                )))
            }
        }
    }
    Ok(out)
}

/// Reward weights h*_{j,i}; the default choice is h* = g*, i.e. the same
/// rule as the level weights.
pub fn reward_weights(rule: &WeightRule, spec: &GammaSpec, conflicts: &ConflictStructure) -> Result<WeightMatrix> {
    conflict_adjusted_weights(rule, spec, conflicts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conflicts::validate_conflicts;
    use proptest::prelude::*;

    /// Literal push-form transcription of the rerouting on a dense table,
    /// reading the else-branch subtraction as g⁻_{j,i}.
    fn algorithm1_push(g: &WeightMatrix, lags: &[usize], n: usize) -> WeightMatrix {
        let mut gs = g.clone();
        for j in 1..=n {
            let mut gm = vec![0.0; n + 1];
            for i in j + 1..=n {
                if i - lags[i - 1] <= j {
                    gm[i] = gs.get(j, i);
                    gs.set(j, i, 0.0);
                } else {
                    let mut acc = 0.0;
                    for l in i - lags[i - 1]..i {
                        acc += g.get(l, i) * gm[l];
                    }
                    gm[i] = acc;
                    gs.set(j, i, gs.get(j, i) - gm[i]);
                }
                for k in i + 1..=n {
                    gs.set(j, k, gs.get(j, k) + gm[i] * g.get(i, k));
                }
            }
        }
        gs
    }

    fn lemma1_matrix(spec: &GammaSpec, spends: &[bool]) -> WeightMatrix {
        let n = spends.len();
        let t = spending_counters(spends);
        let mut m = WeightMatrix::zeros(n);
        for j in 1..=n {
            for i in j + 1..=n {
                m.set(j, i, lemma1_base_weight(spec, t[j], j, i).unwrap());
            }
        }
        m
    }

    #[test]
    fn lemma1_examples() {
        let b = GammaSpec::basel();
        assert!((lemma1_base_weight(&b, 1, 1, 2).unwrap() - 0.75).abs() < 1e-15);
        assert!((lemma1_base_weight(&b, 2, 1, 2).unwrap() - (1.0 - 4.0 / 9.0)).abs() < 1e-15);
        let partial: f64 = (2..=200_001).map(|i| lemma1_base_weight(&b, 1, 1, i).unwrap()).sum();
        assert!((partial - (1.0 - b.value(200_001).unwrap() / b.value(1).unwrap())).abs() < 1e-12);
        assert!((partial - 1.0).abs() < 1e-9);
        let bad = GammaSpec::custom(vec![0.1, 0.3], crate::gamma::Remainder::Zero).unwrap();
        assert!(matches!(lemma1_base_weight(&bad, 1, 1, 2), Err(Error::NonMonotoneGamma { .. })));
    }

    #[test]
    fn renormalized_examples() {
        let r = renormalized_conflict_weights(&[0.5, 0.3, 0.2], &[false; 3]);
        assert_eq!(r.weights, vec![0.5, 0.3, 0.2]);
        let r = renormalized_conflict_weights(&[0.5, 0.3, 0.2], &[true, false, false]);
        assert!((r.weights[1] - 0.6).abs() < 1e-15 && (r.weights[2] - 0.4).abs() < 1e-15);
        assert_eq!(r.weights[0], 0.0);
        let r = renormalized_conflict_weights(&[0.5, 0.5], &[true, true]);
        assert!(r.degenerate);
        assert_eq!(r.clone().into_result(4).unwrap_err(), Error::DegenerateRenormalization { row: 4 });
        assert_eq!(r.weights, vec![0.0, 0.0]);
    }

    #[test]
    fn renormalized_lag_one() {
        let b = GammaSpec::basel();
        let c = validate_conflicts(ConflictStructure::from_lags(&[0, 1, 1, 1, 1]).unwrap()).unwrap();
        let w = conflict_adjusted_weights(&WeightRule::Renormalized, &b, &c).unwrap();
        let g1 = b.value(1).unwrap();
        assert_eq!(w.get(1, 2), 0.0);
        assert!((w.get(1, 3) - b.value(2).unwrap() / (1.0 - g1)).abs() < 1e-15);
    }

    #[test]
    fn rewards_default_and_uniform() {
        let b = GammaSpec::basel();
        let finish: Vec<usize> = (1..=6).map(|i| i + 2).collect();
        let c = validate_conflicts(ConflictStructure::from_finish_times(&finish).unwrap()).unwrap();
        let g = conflict_adjusted_weights(&WeightRule::Renormalized, &b, &c).unwrap();
        let h = reward_weights(&WeightRule::Renormalized, &b, &c).unwrap();
        assert_eq!(g, h);
        let denom = 1.0 - b.value(1).unwrap() - b.value(2).unwrap();
        for i in 2..=3 {
            assert_eq!(h.get(1, i), 0.0);
        }
        for i in 4..=6 {
            assert!((h.get(1, i) - b.value(i - 1).unwrap() / denom).abs() < 1e-15);
        }
        let u = reward_weights(&WeightRule::UniformNext(2), &b, &c).unwrap();
        assert_eq!((u.get(1, 3), u.get(1, 4), u.get(1, 5), u.get(1, 6)), (0.0, 0.5, 0.5, 0.0));
    }

    #[test]
    fn algorithm1_zero_lags_is_identity() {
        let b = GammaSpec::basel();
        let spends = [true, false, true, true, false, false, true, false];
        let n = spends.len();
        let t = algorithm1_weights(&b, &vec![0; n], n, &spends, DEFAULT_HORIZON_CAP).unwrap();
        let g = lemma1_matrix(&b, &spends);
        for j in 1..=n {
            for i in j + 1..=n {
                assert!((t.get(j, i) - g.get(j, i)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn algorithm1_single_lag_example() {
        // L_2 = 1, other lags zero: g*_{1,2} = 0 and
        // g*_{1,i} = g_{1,i} + g_{1,2} g_{2,i}.
        let b = GammaSpec::basel();
        let spends = [false, true, false, true, false, false];
        let n = spends.len();
        let lags = [0, 1, 0, 0, 0, 0];
        let t = algorithm1_weights(&b, &lags, n, &spends, DEFAULT_HORIZON_CAP).unwrap();
        let g = lemma1_matrix(&b, &spends);
        assert_eq!(t.get(1, 2), 0.0);
        for i in 3..=n {
            let want = g.get(1, i) + g.get(1, 2) * g.get(2, i);
            assert!((t.get(1, i) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn algorithm1_matches_push_form_for_batches() {
        let b = GammaSpec::basel();
        let n = 20;
        let lags: Vec<usize> = (0..n).map(|k| k % 5).collect();
        let spends = vec![false; n];
        let t = algorithm1_weights(&b, &lags, n, &spends, DEFAULT_HORIZON_CAP).unwrap();
        let push = algorithm1_push(&lemma1_matrix(&b, &spends), &lags, n);
        for j in 1..=n {
            for i in j + 1..=n {
                assert!((t.get(j, i) - push.get(j, i)).abs() < 1e-12, "({j},{i})");
            }
        }
    }

    #[test]
    fn horizon_cap() {
        let b = GammaSpec::basel();
        let err = algorithm1_weights(&b, &[0; 10], 10, &[false; 10], 5).unwrap_err();
        assert_eq!(err, Error::HorizonExceeded { requested: 10, cap: 5 });
    }

    #[test]
    fn weight_table_text() {
        let t = WeightTable::parse("# demo\nkind g*\n1 3 0.5\n1 4 0.25\n2 4 1.0\n").unwrap();
        assert_eq!(t.kind(), TableKind::Adjusted);
        assert_eq!(t.get(1, 3), 0.5);
        assert_eq!(t.get(1, 2), 0.0);
        assert_eq!(WeightTable::parse(&t.to_text()).unwrap(), t);
        assert!(WeightTable::parse("kind g\n1 2 0.7\n1 3 0.4\n").is_err());
        assert!(matches!(WeightTable::parse("1 2 0.5\n"), Err(Error::Parse { line: 1, .. })));
        assert!(WeightTable::parse("kind g\n2 2 0.1\n").is_err());
    }

    #[test]
    fn table_rule_rejects_conflicting_weight() {
        let t = WeightTable::parse("kind g*\n1 2 0.5\n").unwrap();
        let c = validate_conflicts(ConflictStructure::from_lags(&[0, 1]).unwrap()).unwrap();
        let err = conflict_adjusted_weights(&WeightRule::Table(Arc::new(t)), &GammaSpec::basel(), &c).unwrap_err();
        assert!(matches!(err, Error::ScheduleViolation { j: 1, i: 2, .. }));
    }

    #[test]
    fn rule_text_roundtrip() {
        for s in ["shifted-gamma", "renormalized", "lemma1", "algorithm1", "uniform-next:3"] {
            assert_eq!(s.parse::<WeightRule>().unwrap().to_string(), s);
        }
        assert!("uniform-next:0".parse::<WeightRule>().is_err());
        assert!("bogus".parse::<WeightRule>().is_err());
    }

    fn lag_sequence(max_len: usize) -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(0usize..3, 2..max_len).prop_map(|steps| {
            let mut lags = Vec::with_capacity(steps.len());
            let mut prev = 0usize;
            for (k, s) in steps.into_iter().enumerate() {
                let l = if k == 0 { 0 } else { (prev + 1).saturating_sub(s) };
                lags.push(l);
                prev = l;
            }
            lags
        })
    }

    proptest! {
        #[test]
        fn algorithm1_conserves_mass(lags in lag_sequence(40), seed in any::<u64>()) {
            let n = lags.len();
            let spends: Vec<bool> = (0..n).map(|k| (seed >> (k % 64)) & 1 == 1).collect();
            for spec in [GammaSpec::basel(), GammaSpec::power(1.6).unwrap(), GammaSpec::geometric(0.7).unwrap()] {
                let t = algorithm1_weights(&spec, &lags, n, &spends, DEFAULT_HORIZON_CAP).unwrap();
                for j in 1..=n {
                    let total = t.row_sum(j) + t.overflow[j - 1];
                    prop_assert!((total - 1.0).abs() < 1e-10, "row {} of {}: {}", j, spec, total);
                    for i in j + 1..=n {
                        let w = t.get(j, i);
                        prop_assert!(w >= 0.0);
                        if i - lags[i - 1] <= j {
                            prop_assert_eq!(w, 0.0);
                        }
                    }
                }
            }
        }

        #[test]
        fn algorithm1_pull_equals_push(lags in lag_sequence(25), seed in any::<u64>()) {
            let n = lags.len();
            let spends: Vec<bool> = (0..n).map(|k| (seed >> (k % 64)) & 1 == 1).collect();
            let spec = GammaSpec::basel();
            let t = algorithm1_weights(&spec, &lags, n, &spends, DEFAULT_HORIZON_CAP).unwrap();
            let push = algorithm1_push(&lemma1_matrix(&spec, &spends), &lags, n);
            for j in 1..=n {
                for i in j + 1..=n {
                    prop_assert!((t.get(j, i) - push.get(j, i)).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn static_rules_respect_conflicts(lags in lag_sequence(30), m in 1usize..5) {
            let c = validate_conflicts(ConflictStructure::from_lags(&lags).unwrap()).unwrap();
            let spec = GammaSpec::log_q();
            for rule in [WeightRule::ShiftedGamma, WeightRule::Renormalized, WeightRule::UniformNext(m)] {
                let w = conflict_adjusted_weights(&rule, &spec, &c).unwrap();
                for j in 1..=c.len() {
                    prop_assert!(w.row_sum(j) <= 1.0 + 1e-12);
                    for i in j + 1..=c.len() {
                        if c.conflicts(j, i) {
                            prop_assert_eq!(w.get(j, i), 0.0);
                        }
                    }
                }
            }
        }

        #[test]
        fn lemma1_partial_sums_telescope(t in 1usize..50, j in 1usize..20, m in 1usize..200) {
            let spec = GammaSpec::basel();
            let direct: f64 = (j + 1..=j + m).map(|i| lemma1_base_weight(&spec, t, j, i).unwrap()).sum();
            let want = 1.0 - spec.value(t + m).unwrap() / spec.value(t).unwrap();
            prop_assert!((direct - want).abs() < 1e-12);
        }
    }
}
