//! Calibration metrics: Brier score, log loss and reliability diagrams.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const DEFAULT_CLIP_EPS: f64 = 1e-15;
pub const DEFAULT_BINS: usize = 10;

fn check_lengths(probs: &[f64], labels: &[bool]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} probabilities but {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::contract("metric over an empty sample"));
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::domain("probabilities must lie in [0, 1]"));
    }
    Ok(())
}

/// Mean squared error between predicted probabilities and 0/1 outcomes.
pub fn brier_score(probs: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(probs, labels)?;
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &l)| {
            let y = if l { 1.0 } else { 0.0 };
            (y - p) * (y - p)
        })
        .sum();
    Ok(sum / probs.len() as f64)
}

/// Mean binary cross-entropy with predictions clipped to
/// `[clip_eps, 1 − clip_eps]`.
pub fn log_loss(probs: &[f64], labels: &[bool], clip_eps: f64) -> Result<f64> {
    check_lengths(probs, labels)?;
    if !(clip_eps > 0.0 && clip_eps < 0.5) {
        return Err(Error::domain(format!("clip_eps must lie in (0, 0.5), got {clip_eps}")));
    }
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &l)| {
            let p = p.clamp(clip_eps, 1.0 - clip_eps);
            if l {
                -libm::log(p)
            } else {
                -libm::log1p(-p)
            }
        })
        .sum();
    Ok(sum / probs.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReliabilityBin {
    pub low: f64,
    pub high: f64,
    /// `None` for an empty bin.
    pub mean_predicted: Option<f64>,
    /// Fraction of positives in the bin; `None` for an empty bin.
    pub frequency: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReliabilityDiagram {
    pub bins: Vec<ReliabilityBin>,
}

impl ReliabilityDiagram {
    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Largest `|frequency − mean_predicted|` over bins holding at least
    /// `min_count` samples; `None` when no bin qualifies.
    pub fn max_gap(&self, min_count: usize) -> Option<f64> {
        self.bins
            .iter()
            .filter(|b| b.count >= min_count && b.count > 0)
            .filter_map(|b| Some((b.frequency? - b.mean_predicted?).abs()))
            .reduce(f64::max)
    }
}

/// Equal-width bins over `[0, 1]`; bin `i` covers `[i/n, (i+1)/n)` and the
/// last bin also includes 1.
pub fn reliability_bins(probs: &[f64], labels: &[bool], n_bins: usize) -> Result<ReliabilityDiagram> {
    if n_bins < 2 {
        return Err(Error::contract(format!("need at least 2 bins, got {n_bins}")));
    }
    if probs.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} probabilities but {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::domain("probabilities must lie in [0, 1]"));
    }
    let mut sum_pred = alloc::vec![0.0; n_bins];
    let mut positives = alloc::vec![0usize; n_bins];
    let mut counts = alloc::vec![0usize; n_bins];
    for (&p, &l) in probs.iter().zip(labels) {
        let idx = ((p * n_bins as f64) as usize).min(n_bins - 1);
        sum_pred[idx] += p;
        counts[idx] += 1;
        if l {
            positives[idx] += 1;
        }
    }
    let bins = (0..n_bins)
        .map(|i| {
            let count = counts[i];
            let (mean_predicted, frequency) = if count == 0 {
                (None, None)
            } else {
                (Some(sum_pred[i] / count as f64), Some(positives[i] as f64 / count as f64))
            };
            ReliabilityBin {
                low: i as f64 / n_bins as f64,
                high: (i + 1) as f64 / n_bins as f64,
                mean_predicted,
                frequency,
                count,
            }
        })
        .collect();
    Ok(ReliabilityDiagram { bins })
}
