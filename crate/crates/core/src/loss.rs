//! Training losses over positive scores and their grouped corruptions.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::math::{log_sigmoid, log_sum_exp, sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LossKind {
    /// `Σ max(0, γ + f(t⁻) − f(t⁺))`.
    Pairwise,
    /// Logistic loss `log(1 + exp(−y·f(t)))` over positives and negatives.
    Nll,
    /// Softmax cross-entropy of each positive against its own corruptions.
    MulticlassNll,
    /// `−log σ(γ + f⁺) − Σ pᵢ log σ(−f⁻ᵢ − γ)`, `pᵢ` a softmax over the
    /// negatives' scores held constant for differentiation.
    #[default]
    SelfAdversarial,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::Pairwise,
        LossKind::Nll,
        LossKind::MulticlassNll,
        LossKind::SelfAdversarial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Pairwise => "pairwise",
            LossKind::Nll => "nll",
            LossKind::MulticlassNll => "multiclass_nll",
            LossKind::SelfAdversarial => "self_adversarial",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "pairwise" => Ok(LossKind::Pairwise),
            "nll" => Ok(LossKind::Nll),
            "multiclass_nll" => Ok(LossKind::MulticlassNll),
            "self_adversarial" => Ok(LossKind::SelfAdversarial),
            other => Err(Error::config(format!("unknown loss kind {other:?}"))),
        }
    }
}

/// Summed loss over the batch and its gradient with respect to every score.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad_pos: Vec<f64>,
    /// Same grouping as the negative scores: `eta` entries per positive.
    pub grad_neg: Vec<f64>,
}

/// `neg_scores` holds `neg_scores.len() / pos_scores.len()` corruptions per
/// positive, contiguous per positive.
pub fn compute_loss(
    kind: LossKind,
    pos_scores: &[f64],
    neg_scores: &[f64],
    margin: f64,
    adv_temperature: f64,
) -> Result<LossOutput> {
    if pos_scores.is_empty() {
        return Err(Error::contract("loss over an empty batch"));
    }
    if neg_scores.is_empty() || neg_scores.len() % pos_scores.len() != 0 {
        return Err(Error::contract(format!(
            "{} negative scores cannot be grouped over {} positives",
            neg_scores.len(),
            pos_scores.len()
        )));
    }
    if kind == LossKind::SelfAdversarial && !(adv_temperature > 0.0) {
        return Err(Error::config("adversarial temperature must be positive"));
    }
    let eta = neg_scores.len() / pos_scores.len();
    let mut value = 0.0;
    let mut grad_pos = vec![0.0; pos_scores.len()];
    let mut grad_neg = vec![0.0; neg_scores.len()];

    for (i, &fp) in pos_scores.iter().enumerate() {
        let negs = &neg_scores[i * eta..(i + 1) * eta];
        let gneg = &mut grad_neg[i * eta..(i + 1) * eta];
        match kind {
            LossKind::Pairwise => {
                for (g, &fn_) in gneg.iter_mut().zip(negs) {
                    let slack = margin + fn_ - fp;
                    if slack > 0.0 {
                        value += slack;
                        *g = 1.0;
                        grad_pos[i] -= 1.0;
                    }
                }
            }
            LossKind::Nll => {
                value += softplus(-fp);
                grad_pos[i] = -sigmoid(-fp);
                for (g, &fn_) in gneg.iter_mut().zip(negs) {
                    value += softplus(fn_);
                    *g = sigmoid(fn_);
                }
            }
            LossKind::MulticlassNll => {
                let mut logits = Vec::with_capacity(eta + 1);
                logits.push(fp);
                logits.extend_from_slice(negs);
                let lse = log_sum_exp(&logits);
                value += lse - fp;
                grad_pos[i] = libm::exp(fp - lse) - 1.0;
                for (g, &fn_) in gneg.iter_mut().zip(negs) {
                    *g = libm::exp(fn_ - lse);
                }
            }
            LossKind::SelfAdversarial => {
                value -= log_sigmoid(margin + fp);
                grad_pos[i] = -sigmoid(-(margin + fp));
                let scaled: Vec<f64> = negs.iter().map(|f| adv_temperature * f).collect();
                let lse = log_sum_exp(&scaled);
                for ((g, &fn_), &z) in gneg.iter_mut().zip(negs).zip(&scaled) {
                    let p = libm::exp(z - lse);
                    value -= p * log_sigmoid(-fn_ - margin);
                    *g = p * sigmoid(fn_ + margin);
                }
            }
        }
    }
    Ok(LossOutput {
        value,
        grad_pos,
        grad_neg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::LN_2;

    #[test]
    fn pairwise_saturates() {
        let out = compute_loss(LossKind::Pairwise, &[5.0], &[0.0], 1.0, 1.0).unwrap();
        assert_eq!(out.value, 0.0);
        assert_eq!(out.grad_pos, [0.0]);
        let out = compute_loss(LossKind::Pairwise, &[0.5], &[0.0, 2.0], 1.0, 1.0).unwrap();
        assert!((out.value - 3.0).abs() < 1e-12);
        assert_eq!(out.grad_pos, [-2.0]);
    }

    #[test]
    fn nll_at_zero_is_log_two() {
        let out = compute_loss(LossKind::Nll, &[0.0], &[-1e3], 1.0, 1.0).unwrap();
        assert!((out.value - LN_2).abs() < 1e-12);
    }

    #[test]
    fn multiclass_uniform_is_log_n() {
        let out = compute_loss(LossKind::MulticlassNll, &[0.3], &[0.3; 4], 1.0, 1.0).unwrap();
        assert!((out.value - libm::log(5.0)).abs() < 1e-12);
        assert!((out.grad_pos[0] + 0.8).abs() < 1e-12);
    }

    #[test]
    fn self_adversarial_weights_sum_to_one() {
        // With f⁻ = −γ every log σ(−f⁻ − γ) term is log ½.
        let out = compute_loss(LossKind::SelfAdversarial, &[-1.0], &[-1.0, -1.0, -1.0], 1.0, 0.5).unwrap();
        assert!((out.value - 2.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn contracts() {
        assert!(compute_loss(LossKind::Nll, &[], &[], 1.0, 1.0).is_err());
        assert!(compute_loss(LossKind::Nll, &[1.0, 2.0], &[0.0, 1.0, 2.0], 1.0, 1.0).is_err());
        assert!(compute_loss(LossKind::SelfAdversarial, &[1.0], &[0.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn extreme_scores_stay_finite() {
        for kind in LossKind::ALL {
            let out = compute_loss(kind, &[-800.0, 800.0], &[900.0, -900.0], 1.0, 1.0).unwrap();
            assert!(out.value.is_finite(), "{kind}");
            assert!(out.grad_pos.iter().chain(&out.grad_neg).all(|g| g.is_finite()));
        }
    }

    #[test]
    fn parse_names() {
        for kind in LossKind::ALL {
            assert_eq!(kind.name().parse::<LossKind>().unwrap(), kind);
        }
        assert_eq!("self-adversarial".parse::<LossKind>().unwrap(), LossKind::SelfAdversarial);
    }
}
