//! Synthetic negatives by corrupting one side of each positive triple.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{FilterIndex, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CorruptedSide {
    Subject,
    Object,
}

/// Where replacement entities are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SamplingMode {
    /// Any entity of the graph.
    #[default]
    UniformEntities,
    /// Only entities that occur in the current batch of positives. Falls back
    /// to the whole entity range when the batch offers no alternative.
    PerBatchEntities,
}

/// `eta` corruptions per positive, stored contiguously: the negatives of
/// positive `i` are `negatives[i * eta..(i + 1) * eta]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptionBatch {
    pub positives: Vec<Triple>,
    pub negatives: Vec<Triple>,
    pub sides: Vec<CorruptedSide>,
    pub eta: usize,
}

impl CorruptionBatch {
    pub fn negatives_of(&self, i: usize) -> &[Triple] {
        &self.negatives[i * self.eta..(i + 1) * self.eta]
    }
}

pub fn sample_corruptions(
    positives: &[Triple],
    eta: usize,
    entity_count: usize,
    seed: u64,
    mode: SamplingMode,
) -> Result<CorruptionBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_corruptions_with(positives, eta, entity_count, &mut rng, mode, None)
}

/// Like [`sample_corruptions`] but driven by a caller-supplied RNG and an
/// optional filter; corruptions found in `reject` are redrawn (up to a bounded
/// number of attempts, after which the last draw is kept).
pub fn sample_corruptions_with<R: Rng + ?Sized>(
    positives: &[Triple],
    eta: usize,
    entity_count: usize,
    rng: &mut R,
    mode: SamplingMode,
    reject: Option<&FilterIndex>,
) -> Result<CorruptionBatch> {
    if entity_count < 2 {
        return Err(Error::Sampling(format!(
            "need at least 2 entities to corrupt a triple, got {entity_count}"
        )));
    }
    if eta == 0 {
        return Err(Error::config("eta must be at least 1"));
    }
    let pool: Option<Vec<usize>> = match mode {
        SamplingMode::UniformEntities => None,
        SamplingMode::PerBatchEntities => {
            let mut ids: Vec<usize> = positives.iter().flat_map(|t| [t.subject, t.object]).collect();
            ids.sort_unstable();
            ids.dedup();
            Some(ids)
        }
    };

    let mut negatives = Vec::with_capacity(positives.len() * eta);
    let mut sides = Vec::with_capacity(positives.len() * eta);
    for pos in positives {
        for _ in 0..eta {
            let side = if rng.gen_bool(0.5) {
                CorruptedSide::Subject
            } else {
                CorruptedSide::Object
            };
            let original = match side {
                CorruptedSide::Subject => pos.subject,
                CorruptedSide::Object => pos.object,
            };
            let mut corrupted = *pos;
            for attempt in 0..MAX_REJECTIONS {
                let replacement = pool
                    .as_deref()
                    .and_then(|pool| draw_from_pool(rng, pool, original))
                    .unwrap_or_else(|| draw_excluding(rng, entity_count, original));
                corrupted = replace(pos, side, replacement);
                match reject {
                    Some(filter) if filter.contains(&corrupted) && attempt + 1 < MAX_REJECTIONS => continue,
                    _ => break,
                }
            }
            negatives.push(corrupted);
            sides.push(side);
        }
    }
    Ok(CorruptionBatch {
        positives: positives.to_vec(),
        negatives,
        sides,
        eta,
    })
}

const MAX_REJECTIONS: usize = 64;

fn replace(t: &Triple, side: CorruptedSide, entity: usize) -> Triple {
    match side {
        CorruptedSide::Subject => Triple::new(entity, t.predicate, t.object),
        CorruptedSide::Object => Triple::new(t.subject, t.predicate, entity),
    }
}

/// Uniform over `[0, n) \ {exclude}`.
fn draw_excluding<R: Rng + ?Sized>(rng: &mut R, n: usize, exclude: usize) -> usize {
    let r = rng.gen_range(0..n - 1);
    if r >= exclude {
        r + 1
    } else {
        r
    }
}

/// Uniform over the sorted `pool` minus `exclude`; `None` when nothing is left.
fn draw_from_pool<R: Rng + ?Sized>(rng: &mut R, pool: &[usize], exclude: usize) -> Option<usize> {
    match pool.binary_search(&exclude) {
        Ok(pos) => {
            if pool.len() < 2 {
                return None;
            }
            let r = rng.gen_range(0..pool.len() - 1);
            Some(if r >= pos { pool[r + 1] } else { pool[r] })
        }
        Err(_) if pool.is_empty() => None,
        Err(_) => Some(pool[rng.gen_range(0..pool.len())]),
    }
}
