//! Triple classification: per-relation decision thresholds and thresholded
//! predictions.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Per-relation raw-score thresholds plus a global threshold learned on the
/// pooled sample, used for relations absent from the table.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    pub per_relation: BTreeMap<usize, f64>,
    pub global: f64,
}

impl ThresholdTable {
    pub fn get(&self, relation: usize) -> Option<f64> {
        self.per_relation.get(&relation).copied()
    }

    pub fn len(&self) -> usize {
        self.per_relation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_relation.is_empty()
    }
}

/// Threshold maximising the accuracy of `score ≥ τ` on the given samples.
///
/// Candidates are `−∞`, the midpoints between adjacent distinct scores and
/// `+∞`; among equally accurate candidates the smallest wins. Returns the
/// threshold and its accuracy.
pub fn best_threshold(scores: &[f64], labels: &[bool]) -> (f64, f64) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let positives = labels.iter().filter(|&&l| l).count() as i64;
    let mut correct = positives;
    let mut best = (f64::NEG_INFINITY, correct);
    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        while i < order.len() && scores[order[i]] == value {
            correct += if labels[order[i]] { -1 } else { 1 };
            i += 1;
        }
        if correct > best.1 {
            let tau = match order.get(i) {
                Some(&next) => {
                    let mid = value + (scores[next] - value) / 2.0;
                    if mid > value {
                        mid
                    } else {
                        scores[next]
                    }
                }
                None => f64::INFINITY,
            };
            best = (tau, correct);
        }
    }
    (best.0, best.1 as f64 / scores.len().max(1) as f64)
}

pub fn learn_thresholds(scores: &[f64], labels: &[bool], relations: &[usize]) -> Result<ThresholdTable> {
    if scores.len() != labels.len() || scores.len() != relations.len() {
        return Err(Error::contract(format!(
            "scores ({}), labels ({}) and relations ({}) differ in length",
            scores.len(),
            labels.len(),
            relations.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::contract("threshold learning needs at least one sample"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::domain("scores must be finite"));
    }
    let mut groups: BTreeMap<usize, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for ((&s, &l), &r) in scores.iter().zip(labels).zip(relations) {
        let entry = groups.entry(r).or_default();
        entry.0.push(s);
        entry.1.push(l);
    }
    let per_relation = groups
        .into_iter()
        .map(|(r, (s, l))| (r, best_threshold(&s, &l).0))
        .collect();
    let global = best_threshold(scores, labels).0;
    Ok(ThresholdTable { per_relation, global })
}

#[derive(Debug, Clone, Copy)]
pub enum ThresholdSpec<'a> {
    /// One threshold for everything, e.g. 0.5 on calibrated probabilities.
    Single(f64),
    PerRelation(&'a ThresholdTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub predictions: Vec<bool>,
    pub accuracy: f64,
    /// Samples whose relation had no entry and used the global threshold.
    pub fallbacks: usize,
}

/// Predicts `value ≥ threshold` for every sample and scores the predictions
/// against `labels`. `relations` is only consulted for per-relation tables.
pub fn classify(
    values: &[f64],
    spec: ThresholdSpec<'_>,
    relations: &[usize],
    labels: &[bool],
) -> Result<Classification> {
    if values.len() != labels.len() {
        return Err(Error::contract(format!("{} values but {} labels", values.len(), labels.len())));
    }
    if values.is_empty() {
        return Err(Error::contract("classification needs at least one sample"));
    }
    let mut fallbacks = 0;
    let predictions: Vec<bool> = match spec {
        ThresholdSpec::Single(tau) => values.iter().map(|&v| v >= tau).collect(),
        ThresholdSpec::PerRelation(table) => {
            if relations.len() != values.len() {
                return Err(Error::contract(format!(
                    "{} values but {} relations",
                    values.len(),
                    relations.len()
                )));
            }
            values
                .iter()
                .zip(relations)
                .map(|(&v, &r)| {
                    let tau = table.get(r).unwrap_or_else(|| {
                        fallbacks += 1;
                        table.global
                    });
                    v >= tau
                })
                .collect()
        }
    };
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(Classification {
        accuracy: correct as f64 / values.len() as f64,
        predictions,
        fallbacks,
    })
}
