//! γ-sequence catalog.
//!
//! The ∝-families (power, log-q) are normalized by a constant computed once
//! as a compensated partial sum up to 10⁶ terms plus an Euler–Maclaurin tail,
//! and cached per parameter.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::NeumaierSum;

const PARTIAL_TERMS: usize = 1_000_000;
/// Below this index tails are taken as `1 - partial`, above it directly
/// from the Euler–Maclaurin expansion.
const DIRECT_TAIL_FROM: usize = 10_000;

/// What a custom table yields past its last entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Remainder {
    /// γ_i = 0 past the table.
    Zero,
    /// Requests past the table are an error.
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GammaKind {
    /// γ_i ∝ 1/((i+1) ln²(i+1)).
    LogQ,
    /// γ_i ∝ i^(-s), s > 1.
    Power { s: f64 },
    /// γ_i = 6/(π² i²).
    Basel,
    /// γ_i = q^i (1-q)/q.
    Geometric { q: f64 },
    Custom {
        values: Arc<Vec<f64>>,
        remainder: Remainder,
    },
}

/// A γ family together with its normalization constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSpec {
    kind: GammaKind,
    norm: f64,
}

fn power_raw(s: f64, k: f64) -> f64 {
    k.powf(-s)
}

fn logq_raw(k: f64) -> f64 {
    let l = k.ln();
    1.0 / (k * l * l)
}

/// Σ_{k≥n} k^(-s) by Euler–Maclaurin.
fn power_em_tail(s: f64, n: f64) -> f64 {
    n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s) + s * n.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * n.powf(-s - 3.0) / 720.0
}

/// Σ_{k≥n} 1/(k ln² k) by Euler–Maclaurin.
fn logq_em_tail(n: f64) -> f64 {
    let l = n.ln();
    let f = 1.0 / (n * l * l);
    let df = -(l + 2.0) / (n * n * l * l * l);
    1.0 / l + 0.5 * f - df / 12.0
}

fn power_total(s: f64) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(&z) = cache.lock().unwrap().get(&s.to_bits()) {
        return z;
    }
    let mut acc = NeumaierSum::default();
    // Smallest terms first.
    for k in (1..PARTIAL_TERMS).rev() {
        acc.add(power_raw(s, k as f64));
    }
    let z = acc.total() + power_em_tail(s, PARTIAL_TERMS as f64);
    cache.lock().unwrap().insert(s.to_bits(), z);
    z
}

fn logq_total() -> f64 {
    static TOTAL: OnceLock<f64> = OnceLock::new();
    *TOTAL.get_or_init(|| {
        let mut acc = NeumaierSum::default();
        for k in (2..PARTIAL_TERMS).rev() {
            acc.add(logq_raw(k as f64));
        }
        acc.total() + logq_em_tail(PARTIAL_TERMS as f64)
    })
}

impl GammaSpec {
    pub fn basel() -> Self {
        Self {
            kind: GammaKind::Basel,
            norm: 6.0 / (PI * PI),
        }
    }

    pub fn geometric(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidSpec(format!("geometric ratio {q} not in (0, 1)")));
        }
        Ok(Self {
            kind: GammaKind::Geometric { q },
            norm: (1.0 - q) / q,
        })
    }

    pub fn power(s: f64) -> Result<Self> {
        if !(s > 1.0 && s.is_finite()) {
            return Err(Error::InvalidSpec(format!("power exponent {s} must exceed 1")));
        }
        Ok(Self {
            kind: GammaKind::Power { s },
            norm: 1.0 / power_total(s),
        })
    }

    pub fn log_q() -> Self {
        Self {
            kind: GammaKind::LogQ,
            norm: 1.0 / logq_total(),
        }
    }

    pub fn custom(values: Vec<f64>, remainder: Remainder) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidSpec("custom gamma values must be finite and >= 0".into()));
        }
        let total: f64 = values.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::InvalidSpec(format!("custom gamma values sum to {total} > 1")));
        }
        Ok(Self {
            kind: GammaKind::Custom {
                values: Arc::new(values),
                remainder,
            },
            norm: 1.0,
        })
    }

    pub fn kind(&self) -> &GammaKind {
        &self.kind
    }

    /// Normalization constant c with γ_i = c·f(i).
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// γ_i for i ≥ 1.
    pub fn value(&self, i: usize) -> Result<f64> {
        if i == 0 {
            return Err(Error::Domain {
                what: "gamma index must be >= 1",
                value: 0.0,
            });
        }
        Ok(match &self.kind {
            GammaKind::Basel => self.norm / (i as f64 * i as f64),
            GammaKind::Geometric { q } => self.norm * q.powi(i.min(i32::MAX as usize) as i32),
            GammaKind::Power { s } => self.norm * power_raw(*s, i as f64),
            GammaKind::LogQ => self.norm * logq_raw(i as f64 + 1.0),
            GammaKind::Custom { values, remainder } => match values.get(i - 1) {
                Some(v) => *v,
                None if *remainder == Remainder::Zero => 0.0,
                None => {
                    return Err(Error::Domain {
                        what: "index past the end of the custom gamma table",
                        value: i as f64,
                    })
                }
            },
        })
    }

    /// Σ_{i=1}^{m} γ_i.
    pub fn partial_sum(&self, m: usize) -> f64 {
        match &self.kind {
            GammaKind::Geometric { q } => 1.0 - q.powf(m as f64),
            GammaKind::Custom { values, .. } => values.iter().take(m).sum(),
            _ => {
                if m <= DIRECT_TAIL_FROM {
                    (1..=m).map(|i| self.value(i).unwrap()).collect::<NeumaierSum>().total()
                } else {
                    1.0 - self.tail_sum(m)
                }
            }
        }
    }

    /// Σ_{i>m} γ_i, the mass left after the first m terms.
    pub fn tail_sum(&self, m: usize) -> f64 {
        match &self.kind {
            GammaKind::Geometric { q } => q.powf(m as f64),
            GammaKind::Custom { values, .. } => values.iter().skip(m).sum(),
            GammaKind::Basel | GammaKind::Power { .. } | GammaKind::LogQ if m <= DIRECT_TAIL_FROM => {
                1.0 - self.partial_sum(m)
            }
            GammaKind::Basel => self.norm * power_em_tail(2.0, m as f64 + 1.0),
            GammaKind::Power { s } => self.norm * power_em_tail(*s, m as f64 + 1.0),
            GammaKind::LogQ => self.norm * logq_em_tail(m as f64 + 2.0),
        }
    }

    /// Check γ_1 ≥ γ_2 ≥ … up to index `upto`.
    pub fn check_nonincreasing(&self, upto: usize) -> Result<()> {
        match &self.kind {
            GammaKind::Custom { values, .. } => {
                for (k, w) in values.windows(2).enumerate() {
                    if w[1] > w[0] {
                        return Err(Error::NonMonotoneGamma { index: k + 2 });
                    }
                }
                let _ = upto;
                Ok(())
            }
            // The analytic families are decreasing.
            _ => Ok(()),
        }
    }

    /// Short identifier used in CSV output.
    pub fn id(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for GammaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            GammaKind::LogQ => write!(f, "logq"),
            GammaKind::Basel => write!(f, "basel"),
            GammaKind::Power { s } => write!(f, "power:{s}"),
            GammaKind::Geometric { q } => write!(f, "geometric:{q}"),
            GammaKind::Custom { values, remainder } => {
                let tag = match remainder {
                    Remainder::Zero => "custom",
                    Remainder::Reject => "custom-strict",
                };
                write!(f, "{tag}:")?;
                for (k, v) in values.iter().enumerate() {
                    if k > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{v}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for GammaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s, None),
        };
        let num = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| Error::InvalidSpec(format!("'{name}' needs a parameter")))?
                .parse::<f64>()
                .map_err(|e| Error::InvalidSpec(format!("bad parameter in '{s}': {e}")))
        };
        match name {
            "basel" => Ok(Self::basel()),
            "logq" | "log-q" => Ok(Self::log_q()),
            "power" => Self::power(num(arg)?),
            "geometric" | "geom" => Self::geometric(num(arg)?),
            "custom" | "custom-strict" => {
                let values = arg
                    .unwrap_or("")
                    .split([';', ','])
                    .filter(|t| !t.trim().is_empty())
                    .map(|t| {
                        t.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::InvalidSpec(format!("bad custom value '{t}': {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let rem = if name == "custom" {
                    Remainder::Zero
                } else {
                    Remainder::Reject
                };
                Self::custom(values, rem)
            }
            other => Err(Error::InvalidSpec(format!("unknown gamma family '{other}'"))),
        }
    }
}

/// γ_i for a given spec.
pub fn gamma_value(spec: &GammaSpec, i: usize) -> Result<f64> {
    spec.value(i)
}

/// Lazily grown table of γ_i and cumulative sums, indexed from 1.
#[derive(Debug, Clone)]
pub struct GammaTable {
    spec: GammaSpec,
    values: Vec<f64>,
    cumulative: Vec<f64>,
    running: NeumaierSum,
}

impl GammaTable {
    pub fn new(spec: GammaSpec) -> Self {
        Self {
            spec,
            values: vec![0.0],
            cumulative: vec![0.0],
            running: NeumaierSum::default(),
        }
    }

    pub fn spec(&self) -> &GammaSpec {
        &self.spec
    }

    /// Make sure indices up to `n` are available.
    pub fn ensure(&mut self, n: usize) -> Result<()> {
        while self.values.len() <= n {
            let i = self.values.len();
            let v = self.spec.value(i)?;
            self.values.push(v);
            self.running.add(v);
            self.cumulative.push(self.running.total());
        }
        Ok(())
    }

    /// γ_i; `i` must be within the ensured range, γ_0 reads as 0.
    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Σ_{k=1}^{m} γ_k within the ensured range.
    #[inline]
    pub fn cumulative(&self, m: usize) -> f64 {
        self.cumulative[m]
    }

    pub fn len(&self) -> usize {
        self.values.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // 40-digit references.
    const BASEL_1: f64 = 0.607_927_101_854_026_6;
    const BASEL_2: f64 = 0.151_981_775_463_506_66;
    const INV_ZETA_1_6: f64 = 0.437_490_165_774_473_64;
    const LOGQ_TOTAL: f64 = 2.109_742_801_236_891_9;

    #[test]
    fn basel_values() {
        let g = GammaSpec::basel();
        assert!((g.value(1).unwrap() - BASEL_1).abs() < 1e-16);
        assert!((g.value(2).unwrap() - BASEL_2).abs() < 1e-16);
        assert!(g.value(0).is_err());
    }

    #[test]
    fn geometric_values_and_tail() {
        let g = GammaSpec::geometric(0.6).unwrap();
        assert!((g.value(2).unwrap() - 0.24).abs() < 1e-15);
        assert!((g.tail_sum(12) - 0.6f64.powi(12)).abs() < 1e-18);
        assert!((g.partial_sum(5) - (1.0 - 0.6f64.powi(5))).abs() < 1e-15);
        assert!(GammaSpec::geometric(1.0).is_err());
        assert!(GammaSpec::geometric(0.0).is_err());
    }

    #[test]
    fn power_normalization_matches_zeta() {
        let g = GammaSpec::power(1.6).unwrap();
        assert!((g.value(1).unwrap() - INV_ZETA_1_6).abs() < 1e-10);
        assert!(GammaSpec::power(1.0).is_err());
        assert!(GammaSpec::power(0.5).is_err());
    }

    #[test]
    fn logq_normalization_matches_reference() {
        let g = GammaSpec::log_q();
        assert!((1.0 / g.normalization() - LOGQ_TOTAL).abs() < 1e-10);
    }

    #[test]
    fn partial_sums_up_to_a_million() {
        // Basel and geometric reach the 1e-4 band within 10^6 terms; the
        // slowly decaying families are checked against the analytic tail.
        for spec in [
            GammaSpec::basel(),
            GammaSpec::geometric(0.9).unwrap(),
            GammaSpec::power(1.6).unwrap(),
            GammaSpec::log_q(),
        ] {
            let direct: f64 = (1..=1_000_000)
                .map(|i| spec.value(i).unwrap())
                .collect::<NeumaierSum>()
                .total();
            assert!(direct <= 1.0 + 1e-12, "{spec}: {direct}");
            let tail = spec.tail_sum(1_000_000);
            assert!((direct + tail - 1.0).abs() < 1e-10, "{spec}: {direct} + {tail}");
            if matches!(spec.kind(), GammaKind::Basel | GammaKind::Geometric { .. }) {
                assert!(direct >= 1.0 - 1e-4);
            }
        }
    }

    #[test]
    fn tails_are_consistent_across_the_switch() {
        for spec in [GammaSpec::basel(), GammaSpec::power(1.6).unwrap(), GammaSpec::log_q()] {
            let m = DIRECT_TAIL_FROM;
            let a = spec.tail_sum(m);
            let b = spec.tail_sum(m + 1) + spec.value(m + 1).unwrap();
            assert!((a - b).abs() < 1e-13 * a.max(1e-3), "{spec}: {a} vs {b}");
        }
    }

    #[test]
    fn parse_roundtrip() {
        for text in ["basel", "logq", "power:1.6", "geometric:0.7", "custom:0.5;0.25"] {
            let spec: GammaSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
            assert_eq!(spec.to_string().parse::<GammaSpec>().unwrap(), spec);
        }
        assert!("nope".parse::<GammaSpec>().is_err());
        assert!("power".parse::<GammaSpec>().is_err());
    }

    #[test]
    fn custom_table() {
        let g = GammaSpec::custom(vec![0.5, 0.3], Remainder::Zero).unwrap();
        assert_eq!(g.value(3).unwrap(), 0.0);
        let strict = GammaSpec::custom(vec![0.5, 0.3], Remainder::Reject).unwrap();
        assert!(strict.value(3).is_err());
        let up = GammaSpec::custom(vec![0.2, 0.3], Remainder::Zero).unwrap();
        assert!(matches!(up.check_nonincreasing(10), Err(Error::NonMonotoneGamma { index: 2 })));
        assert!(GammaSpec::custom(vec![0.7, 0.4], Remainder::Zero).is_err());
    }

    #[test]
    fn table_matches_spec() {
        let spec = GammaSpec::power(1.6).unwrap();
        let mut t = GammaTable::new(spec.clone());
        t.ensure(50).unwrap();
        for i in 1..=50 {
            assert_eq!(t.get(i), spec.value(i).unwrap());
        }
        assert!((t.cumulative(50) - spec.partial_sum(50)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn geometric_partial_sum_identity(q in 0.05f64..0.95, m in 1usize..200) {
            let g = GammaSpec::geometric(q).unwrap();
            let direct: f64 = (1..=m).map(|i| g.value(i).unwrap()).collect::<NeumaierSum>().total();
            prop_assert!((direct - (1.0 - q.powi(m as i32))).abs() < 1e-12);
        }

        #[test]
        fn families_are_nonnegative_and_decreasing(i in 1usize..100_000, s in 1.05f64..4.0) {
            for spec in [GammaSpec::basel(), GammaSpec::power(s).unwrap(), GammaSpec::log_q()] {
                let a = spec.value(i).unwrap();
                let b = spec.value(i + 1).unwrap();
                prop_assert!(a >= b && b >= 0.0);
            }
        }
    }
}
