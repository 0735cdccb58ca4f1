//! Embedding storage and the TransE, DistMult, ComplEx and HolE scoring
//! functions with their analytic gradients.
//!
//! Every model keeps one row-major `f64` matrix for entities and one for
//! relations. Rows have width `k`, except for ComplEx where a row holds the
//! real half in `[0, k)` followed by the imaginary half in `[k, 2k)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{check_triple_ids, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NormOrder {
    L1,
    L2,
}

impl NormOrder {
    pub fn order(self) -> u8 {
        match self {
            NormOrder::L1 => 1,
            NormOrder::L2 => 2,
        }
    }

    pub fn from_order(n: u8) -> Result<Self> {
        match n {
            1 => Ok(NormOrder::L1),
            2 => Ok(NormOrder::L2),
            other => Err(Error::config(format!("TransE norm order must be 1 or 2, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ModelKind {
    TransE { norm: NormOrder },
    DistMult,
    ComplEx,
    HolE,
}

impl ModelKind {
    /// Stored row width for embedding dimensionality `k`.
    pub fn row_width(self, k: usize) -> usize {
        match self {
            ModelKind::ComplEx => 2 * k,
            _ => k,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TransE { .. } => "TransE",
            ModelKind::DistMult => "DistMult",
            ModelKind::ComplEx => "ComplEx",
            ModelKind::HolE => "HolE",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::TransE { norm } => write!(f, "transe-l{}", norm.order()),
            ModelKind::DistMult => f.write_str("distmult"),
            ModelKind::ComplEx => f.write_str("complex"),
            ModelKind::HolE => f.write_str("hole"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    /// Accepts `transe` (L2), `transe-l1`, `transe-l2`, `distmult`, `complex`, `hole`.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" | "transe-l2" => Ok(ModelKind::TransE { norm: NormOrder::L2 }),
            "transe-l1" => Ok(ModelKind::TransE { norm: NormOrder::L1 }),
            "distmult" => Ok(ModelKind::DistMult),
            "complex" => Ok(ModelKind::ComplEx),
            "hole" => Ok(ModelKind::HolE),
            other => Err(Error::config(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    kind: ModelKind,
    k: usize,
    num_entities: usize,
    num_relations: usize,
    seed: u64,
    entity: Vec<f64>,
    relation: Vec<f64>,
}

/// Draws a model with Glorot-style uniform entries on `[-√(6/d), √(6/d)]`,
/// `d` being the stored row width.
pub fn init_model(
    kind: ModelKind,
    k: usize,
    num_entities: usize,
    num_relations: usize,
    seed: u64,
) -> Result<EmbeddingModel> {
    if k == 0 {
        return Err(Error::config("embedding dimensionality k must be at least 1"));
    }
    if num_entities == 0 || num_relations == 0 {
        return Err(Error::config(format!(
            "cannot initialise a model with {num_entities} entities and {num_relations} relations"
        )));
    }
    let d = kind.row_width(k);
    let bound = libm::sqrt(6.0 / d as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-bound..=bound)).collect() };
    let entity = draw(num_entities * d);
    let relation = draw(num_relations * d);
    Ok(EmbeddingModel {
        kind,
        k,
        num_entities,
        num_relations,
        seed,
        entity,
        relation,
    })
}

impl EmbeddingModel {
    /// Assembles a model from raw matrices, checking shapes and finiteness.
    pub fn from_parts(
        kind: ModelKind,
        k: usize,
        num_entities: usize,
        num_relations: usize,
        seed: u64,
        entity: Vec<f64>,
        relation: Vec<f64>,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("embedding dimensionality k must be at least 1"));
        }
        let d = kind.row_width(k);
        if entity.len() != num_entities * d || relation.len() != num_relations * d {
            return Err(Error::contract(format!(
                "matrix sizes ({}, {}) do not match {num_entities}x{d} and {num_relations}x{d}",
                entity.len(),
                relation.len()
            )));
        }
        if entity.iter().chain(&relation).any(|v| !v.is_finite()) {
            return Err(Error::domain("embedding matrices contain non-finite values"));
        }
        Ok(Self {
            kind,
            k,
            num_entities,
            num_relations,
            seed,
            entity,
            relation,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Row width: `k`, or `2k` for ComplEx.
    pub fn width(&self) -> usize {
        self.kind.row_width(self.k)
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entity_matrix(&self) -> &[f64] {
        &self.entity
    }

    pub fn relation_matrix(&self) -> &[f64] {
        &self.relation
    }

    pub(crate) fn matrices_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.entity, &mut self.relation)
    }

    pub fn entity_row(&self, id: usize) -> &[f64] {
        let d = self.width();
        &self.entity[id * d..(id + 1) * d]
    }

    pub fn relation_row(&self, id: usize) -> &[f64] {
        let d = self.width();
        &self.relation[id * d..(id + 1) * d]
    }

    pub fn entity_row_mut(&mut self, id: usize) -> &mut [f64] {
        let d = self.width();
        &mut self.entity[id * d..(id + 1) * d]
    }

    pub fn relation_row_mut(&mut self, id: usize) -> &mut [f64] {
        let d = self.width();
        &mut self.relation[id * d..(id + 1) * d]
    }

    pub fn is_finite(&self) -> bool {
        self.entity.iter().chain(&self.relation).all(|v| v.is_finite())
    }

    pub fn check_ids(&self, t: &Triple) -> Result<()> {
        check_triple_ids(t, self.num_entities, self.num_relations)
    }

    /// Raw plausibility score of `t`; higher means more plausible.
    pub fn score(&self, t: &Triple) -> Result<f64> {
        self.check_ids(t)?;
        Ok(self.score_unchecked(t))
    }

    /// Scores without the id range check. Panics on out-of-range ids.
    pub fn score_unchecked(&self, t: &Triple) -> f64 {
        score_rows(
            self.kind,
            self.entity_row(t.subject),
            self.relation_row(t.predicate),
            self.entity_row(t.object),
        )
    }

    pub fn score_all(&self, triples: &[Triple]) -> Result<Vec<f64>> {
        triples.iter().map(|t| self.score(t)).collect()
    }

    /// Adds `upstream · ∂f(t)/∂θ` into flat gradient buffers shaped like the
    /// entity and relation matrices.
    pub fn accumulate_gradient(
        &self,
        t: &Triple,
        upstream: f64,
        entity_grad: &mut [f64],
        relation_grad: &mut [f64],
    ) {
        let mut scratch = vec![0.0; 3 * self.width()];
        self.accumulate_gradient_with(t, upstream, entity_grad, relation_grad, &mut scratch);
    }

    /// [`EmbeddingModel::accumulate_gradient`] with a caller-owned scratch
    /// buffer of at least `3 * width` values.
    pub fn accumulate_gradient_with(
        &self,
        t: &Triple,
        upstream: f64,
        entity_grad: &mut [f64],
        relation_grad: &mut [f64],
        scratch: &mut [f64],
    ) {
        let d = self.width();
        let (gs, rest) = scratch.split_at_mut(d);
        let (gp, rest) = rest.split_at_mut(d);
        let go = &mut rest[..d];
        score_gradient(
            self.kind,
            self.entity_row(t.subject),
            self.relation_row(t.predicate),
            self.entity_row(t.object),
            gs,
            gp,
            go,
        );
        let add = |dst: &mut [f64], src: &[f64]| {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += upstream * b;
            }
        };
        add(&mut entity_grad[t.subject * d..(t.subject + 1) * d], gs);
        add(&mut relation_grad[t.predicate * d..(t.predicate + 1) * d], gp);
        add(&mut entity_grad[t.object * d..(t.object + 1) * d], go);
    }

    /// Rescales every entity row to unit L2 norm (the original TransE
    /// convention; off unless requested by the training config).
    pub fn normalize_entity_rows(&mut self, rows: impl IntoIterator<Item = usize>) {
        for id in rows {
            let row = self.entity_row_mut(id);
            let norm = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>());
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
}

/// Dispatches to the scoring function of `kind` on raw embedding rows.
pub fn score_rows(kind: ModelKind, es: &[f64], rp: &[f64], eo: &[f64]) -> f64 {
    match kind {
        ModelKind::TransE { norm } => score_transe(es, rp, eo, norm),
        ModelKind::DistMult => score_distmult(es, rp, eo),
        ModelKind::ComplEx => score_complex(es, rp, eo),
        ModelKind::HolE => score_hole(es, rp, eo),
    }
}

/// `-‖e_s + r_p − e_o‖_n`.
pub fn score_transe(es: &[f64], rp: &[f64], eo: &[f64], norm: NormOrder) -> f64 {
    let residuals = es.iter().zip(rp).zip(eo).map(|((s, p), o)| s + p - o);
    match norm {
        NormOrder::L1 => -residuals.map(f64::abs).sum::<f64>(),
        NormOrder::L2 => -libm::sqrt(residuals.map(|v| v * v).sum::<f64>()),
    }
}

/// Trilinear product `Σ e_s[i]·r_p[i]·e_o[i]`.
pub fn score_distmult(es: &[f64], rp: &[f64], eo: &[f64]) -> f64 {
    es.iter().zip(rp).zip(eo).map(|((s, p), o)| s * p * o).sum()
}

/// `Re(Σ e_s[i]·r_p[i]·conj(e_o[i]))` over rows laid out as `[re | im]`.
pub fn score_complex(es: &[f64], rp: &[f64], eo: &[f64]) -> f64 {
    let k = es.len() / 2;
    let (sr, si) = es.split_at(k);
    let (pr, pi) = rp.split_at(k);
    let (or, oi) = eo.split_at(k);
    (0..k)
        .map(|i| {
            sr[i] * pr[i] * or[i] - si[i] * pi[i] * or[i] + sr[i] * pi[i] * oi[i]
                + si[i] * pr[i] * oi[i]
        })
        .sum()
}

/// `⟨e_s, r_p ⋆ e_o⟩` with the circular correlation
/// `c[i] = Σ_j r_p[j]·e_o[(i + j) mod k]`, computed directly in O(k²).
pub fn score_hole(es: &[f64], rp: &[f64], eo: &[f64]) -> f64 {
    let k = es.len();
    let mut total = 0.0;
    for (i, s) in es.iter().enumerate() {
        let mut c = 0.0;
        for (j, p) in rp.iter().enumerate() {
            c += p * eo[(i + j) % k];
        }
        total += s * c;
    }
    total
}

/// Writes `∂f/∂e_s`, `∂f/∂r_p`, `∂f/∂e_o` into the three output rows
/// (overwriting them).
pub fn score_gradient(
    kind: ModelKind,
    es: &[f64],
    rp: &[f64],
    eo: &[f64],
    gs: &mut [f64],
    gp: &mut [f64],
    go: &mut [f64],
) {
    match kind {
        ModelKind::TransE { norm } => {
            let d = es.len();
            let mut residual = vec![0.0; d];
            for i in 0..d {
                residual[i] = es[i] + rp[i] - eo[i];
            }
            let dir: Vec<f64> = match norm {
                NormOrder::L1 => residual.iter().map(|&v| sign(v)).collect(),
                NormOrder::L2 => {
                    let n = libm::sqrt(residual.iter().map(|v| v * v).sum::<f64>());
                    if n > 0.0 {
                        residual.iter().map(|v| v / n).collect()
                    } else {
                        vec![0.0; d]
                    }
                }
            };
            for i in 0..d {
                gs[i] = -dir[i];
                gp[i] = -dir[i];
                go[i] = dir[i];
            }
        }
        ModelKind::DistMult => {
            for i in 0..es.len() {
                gs[i] = rp[i] * eo[i];
                gp[i] = es[i] * eo[i];
                go[i] = es[i] * rp[i];
            }
        }
        ModelKind::ComplEx => {
            let k = es.len() / 2;
            for i in 0..k {
                let (a, b) = (es[i], es[k + i]);
                let (c, d) = (rp[i], rp[k + i]);
                let (e, f) = (eo[i], eo[k + i]);
                gs[i] = c * e + d * f;
                gs[k + i] = c * f - d * e;
                gp[i] = a * e + b * f;
                gp[k + i] = a * f - b * e;
                go[i] = a * c - b * d;
                go[k + i] = a * d + b * c;
            }
        }
        ModelKind::HolE => {
            let k = es.len();
            for i in 0..k {
                gs[i] = (0..k).map(|j| rp[j] * eo[(i + j) % k]).sum();
            }
            for j in 0..k {
                gp[j] = (0..k).map(|i| es[i] * eo[(i + j) % k]).sum();
            }
            for m in 0..k {
                go[m] = (0..k).map(|i| es[i] * rp[(m + k - i) % k]).sum();
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
