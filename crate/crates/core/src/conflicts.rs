//! Conflict structures: per-hypothesis conflict sets 𝒳_i and their lag,
//! finish-time and batch representations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-index conflict sets (1-based indices) with whatever derived forms
/// apply: lags for contiguous suffixes, batches for block structures.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConflictStructure {
    sets: Vec<Vec<usize>>,
    lags: Option<Vec<usize>>,
    finish_times: Option<Vec<usize>>,
    batch_of: Option<Vec<usize>>,
    batches: Option<Vec<(usize, usize)>>,
}

impl ConflictStructure {
    /// From explicit sets; `sets[i-1]` is 𝒳_i. Sets are sorted and
    /// deduplicated but otherwise unchecked until validation.
    pub fn from_sets(sets: Vec<Vec<usize>>) -> Self {
        let sets = sets
            .into_iter()
            .map(|mut s| {
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        Self {
            sets,
            ..Default::default()
        }
    }

    /// 𝒳_i = {i-L_i, …, i-1}.
    pub fn from_lags(lags: &[usize]) -> Result<Self> {
        let mut sets = Vec::with_capacity(lags.len());
        for (k, &l) in lags.iter().enumerate() {
            let i = k + 1;
            if l >= i {
                return Err(Error::InvalidConflict {
                    index: i,
                    conflict: 0,
                });
            }
            sets.push((i - l..i).collect());
        }
        Ok(Self {
            sets,
            ..Default::default()
        })
    }

    /// 𝒳_i = {j < i : E_j ≥ i}; `finish[j-1]` is E_j ≥ j.
    pub fn from_finish_times(finish: &[usize]) -> Result<Self> {
        for (k, &e) in finish.iter().enumerate() {
            if e < k + 1 {
                return Err(Error::Domain {
                    what: "finish time E_j must be >= j",
                    value: e as f64,
                });
            }
        }
        let n = finish.len();
        let sets = (1..=n)
            .map(|i| (1..i).filter(|&j| finish[j - 1] >= i).collect())
            .collect();
        Ok(Self {
            sets,
            finish_times: Some(finish.to_vec()),
            ..Default::default()
        })
    }

    /// Contiguous batches of the given sizes; members of a batch conflict
    /// with each other.
    pub fn from_batch_sizes(sizes: &[usize]) -> Result<Self> {
        let mut sets = Vec::new();
        for &b in sizes {
            if b == 0 {
                return Err(Error::InvalidConfig("batch size must be positive".into()));
            }
            let start = sets.len() + 1;
            for i in start..start + b {
                sets.push((start..i).collect());
            }
        }
        Ok(Self {
            sets,
            ..Default::default()
        })
    }

    /// `n / b` batches of size `b`.
    pub fn uniform_batches(n: usize, b: usize) -> Result<Self> {
        if b == 0 || n % b != 0 {
            return Err(Error::InvalidConfig(format!("n = {n} is not a multiple of b = {b}")));
        }
        Self::from_batch_sizes(&vec![b; n / b])
    }

    /// Batches of size `b` combined with an asynchronous test duration `e`:
    /// 𝒳_i holds earlier members of the batch of i and every j with j + e ≥ i.
    pub fn batches_with_duration(n: usize, b: usize, e: usize) -> Result<Self> {
        if b == 0 || n % b != 0 {
            return Err(Error::InvalidConfig(format!("n = {n} is not a multiple of b = {b}")));
        }
        let sets = (1..=n)
            .map(|i| {
                let batch_start = (i - 1) / b * b + 1;
                let start = batch_start.min(i.saturating_sub(e).max(1));
                (start..i).collect()
            })
            .collect();
        Ok(Self {
            sets,
            ..Default::default()
        })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// 𝒳_i, sorted.
    pub fn conflict_set(&self, i: usize) -> &[usize] {
        &self.sets[i - 1]
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// `j ∈ 𝒳_i`.
    pub fn conflicts(&self, j: usize, i: usize) -> bool {
        self.sets[i - 1].binary_search(&j).is_ok()
    }

    /// Lags, present after validation when every set is a contiguous suffix.
    pub fn lags(&self) -> Option<&[usize]> {
        self.lags.as_deref()
    }

    /// Lags, or the first index whose set has a gap.
    pub fn require_lags(&self) -> Result<&[usize]> {
        if let Some(l) = &self.lags {
            return Ok(l);
        }
        let index = first_gap(&self.sets).unwrap_or(1);
        Err(Error::NonContiguousSuffix { index })
    }

    pub fn finish_times(&self) -> Option<&[usize]> {
        self.finish_times.as_deref()
    }

    /// Batch id (1-based) per index, present in batch form.
    pub fn batch_of(&self) -> Option<&[usize]> {
        self.batch_of.as_deref()
    }

    /// Inclusive 1-based index ranges of the batches, present in batch form.
    pub fn batches(&self) -> Option<&[(usize, usize)]> {
        self.batches.as_deref()
    }

    /// E_j = last index whose conflict set contains j (j itself if none);
    /// `None` when j still conflicts with the last index.
    pub fn releases(&self) -> Vec<Option<usize>> {
        let n = self.sets.len();
        let mut last: Vec<usize> = (1..=n).collect();
        for (k, set) in self.sets.iter().enumerate() {
            for &j in set {
                last[j - 1] = last[j - 1].max(k + 1);
            }
        }
        last.into_iter()
            .enumerate()
            .map(|(k, e)| if e == n && k + 1 < n { None } else { Some(e) })
            .collect()
    }

    /// Smallest lag-form structure containing this one:
    /// 𝒳'_i = {min 𝒳_i, …, i-1}.
    pub fn lag_closure(&self) -> ConflictStructure {
        let sets = self
            .sets
            .iter()
            .enumerate()
            .map(|(k, s)| match s.first() {
                Some(&lo) => (lo..k + 1).collect(),
                None => Vec::new(),
            })
            .collect();
        ConflictStructure {
            sets,
            ..Default::default()
        }
    }
}

fn is_suffix(set: &[usize], i: usize) -> bool {
    match (set.first(), set.last()) {
        (Some(&lo), Some(&hi)) => hi == i - 1 && set.len() == hi + 1 - lo,
        _ => true,
    }
}

fn first_gap(sets: &[Vec<usize>]) -> Option<usize> {
    (1..=sets.len()).find(|&i| !is_suffix(&sets[i - 1], i))
}

/// Validate index ranges and monotonicity and fill in the derived lag and
/// batch forms where they apply.
pub fn validate_conflicts(mut structure: ConflictStructure) -> Result<ConflictStructure> {
    let sets = &structure.sets;
    for (k, set) in sets.iter().enumerate() {
        let i = k + 1;
        if let Some(&bad) = set.iter().find(|&&j| j == 0 || j >= i) {
            return Err(Error::InvalidConflict {
                index: i,
                conflict: bad,
            });
        }
        // Consecutive check suffices: j ∈ 𝒳_i, j < i-1 must be in 𝒳_{i-1}.
        if i >= 2 {
            let prev = &sets[k - 1];
            if let Some(&j) = set.iter().find(|&&j| j < i - 1 && prev.binary_search(&j).is_err()) {
                return Err(Error::NonMonotoneConflicts { j, k: i - 1, i });
            }
        }
    }

    structure.lags = if first_gap(sets).is_none() {
        Some(sets.iter().map(Vec::len).collect())
    } else {
        None
    };

    structure.batch_of = None;
    structure.batches = None;
    if let Some(lags) = &structure.lags {
        let mut batch_of = Vec::with_capacity(lags.len());
        let mut batches: Vec<(usize, usize)> = Vec::new();
        let mut batch_form = true;
        for (k, &l) in lags.iter().enumerate() {
            let i = k + 1;
            if l == 0 {
                batches.push((i, i));
            } else if let Some(last) = batches.last_mut() {
                if i - l == last.0 {
                    last.1 = i;
                } else {
                    batch_form = false;
                    break;
                }
            }
            batch_of.push(batches.len());
        }
        if batch_form {
            structure.batch_of = Some(batch_of);
            structure.batches = Some(batches);
        }
    }
    Ok(structure)
}

/// Validate and additionally require lag form.
pub fn validate_lag_form(structure: ConflictStructure) -> Result<ConflictStructure> {
    let s = validate_conflicts(structure)?;
    s.require_lags()?;
    Ok(s)
}

/// Validate and additionally require batch form.
pub fn validate_batch_form(structure: ConflictStructure) -> Result<ConflictStructure> {
    let s = validate_conflicts(structure)?;
    if s.batches.is_none() {
        let index = match &s.lags {
            None => first_gap(&s.sets).unwrap_or(1),
            Some(lags) => {
                let mut start = 1;
                let mut bad = 1;
                for (k, &l) in lags.iter().enumerate() {
                    let i = k + 1;
                    if l == 0 {
                        start = i;
                    } else if i - l != start {
                        bad = i;
                        break;
                    }
                }
                bad
            }
        };
        return Err(Error::NotBatchForm { index });
    }
    Ok(s)
}
