//! Link-prediction ranking metrics (MR, MRR, Hits@N) in raw and filtered
//! settings.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::graph::{FilterIndex, Triple};
use crate::models::EmbeddingModel;

pub const DEFAULT_HITS_AT: [usize; 3] = [1, 3, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum RankMode {
    Filtered,
    Raw,
}

/// How corruptions scoring exactly as high as the true triple are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum TiePolicy {
    /// Ties rank ahead of the true triple.
    #[default]
    Pessimistic,
    /// Ties rank behind the true triple.
    Optimistic,
}

impl fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TiePolicy::Pessimistic => "pessimistic",
            TiePolicy::Optimistic => "optimistic",
        })
    }
}

impl core::str::FromStr for TiePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pessimistic" => Ok(TiePolicy::Pessimistic),
            "optimistic" => Ok(TiePolicy::Optimistic),
            other => Err(Error::config(alloc::format!("unknown tie policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankReport {
    pub mode: RankMode,
    pub tie_policy: TiePolicy,
    pub mr: f64,
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
    /// Number of ranks averaged (two per evaluated triple).
    pub num_ranks: usize,
}

/// Subject-side and object-side rank of `t` among all its one-slot
/// corruptions. Corruptions found in `filter` are skipped.
pub fn rank_triple(
    model: &EmbeddingModel,
    t: &Triple,
    filter: Option<&FilterIndex>,
    ties: TiePolicy,
) -> Result<(usize, usize)> {
    model.check_ids(t)?;
    let target = model.score_unchecked(t);
    let side_rank = |make: &dyn Fn(usize) -> Triple, original: usize| -> usize {
        let mut greater = 0;
        let mut equal = 0;
        for e in 0..model.num_entities() {
            if e == original {
                continue;
            }
            let candidate = make(e);
            if filter.is_some_and(|f| f.contains(&candidate)) {
                continue;
            }
            let s = model.score_unchecked(&candidate);
            if s > target {
                greater += 1;
            } else if s == target {
                equal += 1;
            }
        }
        match ties {
            TiePolicy::Pessimistic => 1 + greater + equal,
            TiePolicy::Optimistic => 1 + greater,
        }
    };
    let subject_rank = side_rank(&|e| Triple::new(e, t.predicate, t.object), t.subject);
    let object_rank = side_rank(&|e| Triple::new(t.subject, t.predicate, e), t.object);
    Ok((subject_rank, object_rank))
}

/// Aggregates [`rank_triple`] over `positives`; filtered when a filter is
/// given, raw otherwise.
pub fn ranked_eval(
    model: &EmbeddingModel,
    positives: &[Triple],
    filter: Option<&FilterIndex>,
    hits_at: &[usize],
    ties: TiePolicy,
) -> Result<RankReport> {
    if positives.is_empty() {
        return Err(Error::contract("ranking needs at least one positive triple"));
    }
    let mut ranks = Vec::with_capacity(2 * positives.len());
    for t in positives {
        let (s, o) = rank_triple(model, t, filter, ties)?;
        ranks.push(s);
        ranks.push(o);
    }
    Ok(summarize_ranks(&ranks, hits_at, filter.is_some(), ties))
}

/// MR / MRR / Hits@N of a list of ranks (each ≥ 1).
pub fn summarize_ranks(ranks: &[usize], hits_at: &[usize], filtered: bool, ties: TiePolicy) -> RankReport {
    let n = ranks.len() as f64;
    let mr = ranks.iter().map(|&r| r as f64).sum::<f64>() / n;
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    let hits = hits_at
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
        .collect();
    RankReport {
        mode: if filtered { RankMode::Filtered } else { RankMode::Raw },
        tie_policy: ties,
        mr,
        mrr,
        hits,
        num_ranks: ranks.len(),
    }
}
