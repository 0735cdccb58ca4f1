//! Mini-batch training with fresh corruptions per batch and row-sparse Adam.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Triple};
use crate::loss::{compute_loss, LossKind};
use crate::math::derive_seed;
use crate::models::{init_model, EmbeddingModel, ModelKind};
use crate::optim::{Adam, AdamConfig};
use crate::sampling::{sample_corruptions, SamplingMode};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub k: usize,
    /// Corruptions per positive.
    pub eta: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub loss: LossKind,
    /// Margin γ of the pairwise and self-adversarial losses.
    pub margin: f64,
    pub adv_temperature: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub sampling: SamplingMode,
    /// Rescale touched entity rows to unit norm after every step.
    pub normalize_entities: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 100,
            eta: 20,
            epochs: 1000,
            learning_rate: 1e-4,
            batch_size: 512,
            loss: LossKind::SelfAdversarial,
            margin: 1.0,
            adv_temperature: 0.5,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            sampling: SamplingMode::UniformEntities,
            normalize_entities: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if self.eta == 0 {
            return Err(Error::config("eta must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.adv_temperature > 0.0) {
            return Err(Error::config("adv_temperature must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::config("adam betas must lie in [0, 1)"));
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::config("adam_epsilon must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochStats {
    pub epoch: usize,
    /// Loss summed over the epoch divided by the number of positives.
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    pub history: Vec<EpochStats>,
}

/// Trains a fresh model on `graph.triples`.
///
/// Each epoch shuffles the positives with the run RNG and walks them in
/// batches; the corruptions for batch `b` of epoch `e` come from a seed
/// derived from `(seed, e, b)`. `on_epoch` sees every epoch's statistics as
/// soon as the epoch finishes.
pub fn train(
    graph: &KnowledgeGraph,
    kind: ModelKind,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    config.validate()?;
    if graph.is_empty() {
        return Err(Error::config("cannot train on an empty graph"));
    }
    let num_entities = graph.num_entities();
    let num_relations = graph.num_relations();
    let mut model = init_model(kind, config.k, num_entities, num_relations, config.seed)?;
    for t in &graph.triples {
        model.check_ids(t)?;
    }
    let d = model.width();
    let adam = config.adam();
    let mut entity_opt = Adam::new(adam, num_entities, d);
    let mut relation_opt = Adam::new(adam, num_relations, d);
    let mut entity_grad = vec![0.0; num_entities * d];
    let mut relation_grad = vec![0.0; num_relations * d];
    let mut scratch = vec![0.0; 3 * d];
    let mut touched_entities: Vec<usize> = Vec::new();
    let mut touched_relations: Vec<usize> = Vec::new();

    let mut order: Vec<Triple> = graph.triples.clone();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, u64::MAX, 0));
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let corruption_seed = derive_seed(config.seed, epoch as u64, batch_idx as u64);
            let corruptions = sample_corruptions(batch, config.eta, num_entities, corruption_seed, config.sampling)?;
            let pos_scores: Vec<f64> = batch.iter().map(|t| model.score_unchecked(t)).collect();
            let neg_scores: Vec<f64> = corruptions.negatives.iter().map(|t| model.score_unchecked(t)).collect();
            let out = compute_loss(config.loss, &pos_scores, &neg_scores, config.margin, config.adv_temperature)?;
            if !out.value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                    loss: out.value,
                });
            }
            epoch_loss += out.value;

            // The step minimises the batch mean.
            let scale = 1.0 / batch.len() as f64;
            touched_entities.clear();
            touched_relations.clear();
            let pairs = batch.iter().zip(&out.grad_pos).chain(corruptions.negatives.iter().zip(&out.grad_neg));
            for (t, &g) in pairs {
                touched_entities.extend([t.subject, t.object]);
                touched_relations.push(t.predicate);
                if g != 0.0 {
                    model.accumulate_gradient_with(t, g * scale, &mut entity_grad, &mut relation_grad, &mut scratch);
                }
            }
            touched_entities.sort_unstable();
            touched_entities.dedup();
            touched_relations.sort_unstable();
            touched_relations.dedup();

            entity_opt.begin_step();
            relation_opt.begin_step();
            {
                let (entity, relation) = model.matrices_mut();
                entity_opt.update_rows(entity, &entity_grad, &touched_entities);
                relation_opt.update_rows(relation, &relation_grad, &touched_relations);
            }
            if config.normalize_entities {
                model.normalize_entity_rows(touched_entities.iter().copied());
            }
            for &row in &touched_entities {
                entity_grad[row * d..(row + 1) * d].fill(0.0);
            }
            for &row in &touched_relations {
                relation_grad[row * d..(row + 1) * d].fill(0.0);
            }
        }
        if !model.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: order.len().div_ceil(config.batch_size).saturating_sub(1),
                loss: f64::NAN,
            });
        }
        let stats = EpochStats {
            epoch,
            mean_loss: epoch_loss / graph.len() as f64,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(TrainOutcome { model, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Dictionary;
    use crate::models::NormOrder;
    use alloc::format;

    fn toy_graph() -> KnowledgeGraph {
        let entities = Dictionary::from_labels((0..20).map(|i| format!("e{i}"))).unwrap();
        let relations = Dictionary::from_labels(["next", "prev"]).unwrap();
        let mut triples = Vec::new();
        for i in 0..19 {
            triples.push(Triple::new(i, 0, i + 1));
            triples.push(Triple::new(i + 1, 1, i));
        }
        KnowledgeGraph::new(entities, relations, triples).unwrap()
    }

    fn config() -> TrainConfig {
        TrainConfig {
            k: 8,
            eta: 5,
            epochs: 200,
            learning_rate: 0.01,
            batch_size: 16,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_decreases_on_structured_graph() {
        let kind = ModelKind::TransE { norm: NormOrder::L2 };
        let out = train(&toy_graph(), kind, &config(), |_| {}).unwrap();
        let first = out.history.first().unwrap().mean_loss;
        let last = out.history.last().unwrap().mean_loss;
        assert_eq!(out.history.len(), 200);
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn training_is_deterministic() {
        let kind = ModelKind::DistMult;
        let cfg = TrainConfig { epochs: 10, ..config() };
        let a = train(&toy_graph(), kind, &cfg, |_| {}).unwrap();
        let b = train(&toy_graph(), kind, &cfg, |_| {}).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn observer_sees_every_epoch() {
        let mut seen = Vec::new();
        let cfg = TrainConfig { epochs: 3, ..config() };
        train(&toy_graph(), ModelKind::HolE, &cfg, |s| seen.push(s.epoch)).unwrap();
        assert_eq!(seen, [0, 1, 2]);
    }

    #[test]
    fn rejects_empty_graph_and_bad_config() {
        let empty = KnowledgeGraph::default();
        assert!(train(&empty, ModelKind::DistMult, &config(), |_| {}).is_err());
        let bad = TrainConfig { eta: 0, ..config() };
        assert!(matches!(train(&toy_graph(), ModelKind::DistMult, &bad, |_| {}), Err(Error::Config(_))));
    }

    #[test]
    fn divergence_is_reported_with_position() {
        // A huge learning rate on DistMult with the NLL loss blows the
        // trilinear scores up within a few batches.
        let cfg = TrainConfig {
            learning_rate: 1e200,
            loss: LossKind::Nll,
            epochs: 50,
            ..config()
        };
        match train(&toy_graph(), ModelKind::DistMult, &cfg, |_| {}) {
            Err(Error::Diverged { epoch, .. }) => assert!(epoch < 50),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
